#pragma once

// StARS: stability-based choice of lambda along a regularization path.

#include "alrnet/compglasso.hpp"
#include "alrnet/evaluate.hpp"

#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

namespace alrnet {

struct StarsConfig {
  int subsample_count = 20;
  /// Unset means floor(10 sqrt(n)), capped at n - 1.
  std::optional<Index> subsample_size;
  double beta = 0.05;
  std::uint64_t seed = 0;
  /// Subsample paths fitted concurrently.
  int workers = 1;
};

inline Index stars_subsample_size(const StarsConfig& cfg, Index n) {
  const Index b = cfg.subsample_size.value_or(
      std::min<Index>(static_cast<Index>(std::floor(10.0 * std::sqrt(static_cast<double>(n)))), n - 1));
  if (b < 1 || b >= n) throw DomainError("subsample size must lie in [1, n)");
  if (cfg.subsample_count < 2) throw DomainError("need at least two subsamples");
  if (!(cfg.beta > 0.0 && cfg.beta < 0.5)) throw DomainError("beta must lie in (0, 0.5)");
  return b;
}

/// Row index sets drawn without replacement, each sorted ascending.
inline std::vector<std::vector<Index>> draw_subsamples(Index n, const StarsConfig& cfg) {
  const Index b = stars_subsample_size(cfg, n);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::vector<Index>> out;
  std::vector<Index> rows(static_cast<std::size_t>(n));
  for (int s = 0; s < cfg.subsample_count; ++s) {
    std::iota(rows.begin(), rows.end(), Index{0});
    std::shuffle(rows.begin(), rows.end(), rng);
    std::vector<Index> pick(rows.begin(), rows.begin() + b);
    std::sort(pick.begin(), pick.end());
    out.push_back(std::move(pick));
  }
  return out;
}

inline CountMatrix subsample_rows(const CountMatrix& x, const std::vector<Index>& rows) {
  CountMatrix out{CountArray(static_cast<Index>(rows.size()), x.counts.cols()), x.taxon_ids};
  for (std::size_t r = 0; r < rows.size(); ++r) out.counts.row(static_cast<Index>(r)) = x.counts.row(rows[r]);
  return out;
}

struct StarsResult {
  double lambda_star = 0.0;
  std::size_t index = 0;
  std::vector<double> lambdas;
  std::vector<double> instability;
  std::vector<double> monotone_instability;
  /// Set when even the largest lambda is above beta.
  bool warning = false;
};

/// Average edgewise instability 2 theta (1 - theta) per lambda, where theta is
/// the fraction of subsamples containing the edge. `networks[s][l]` is the
/// network of subsample s at lambda index l.
inline std::vector<double> edge_instability(const std::vector<std::vector<EdgeSet>>& networks) {
  if (networks.empty()) return {};
  const std::size_t len = networks.front().size();
  std::vector<double> out(len, 0.0);
  for (std::size_t l = 0; l < len; ++l) {
    const Index nodes = networks.front()[l].node_count;
    const Index pairs = nodes * (nodes - 1) / 2;
    if (pairs == 0) continue;
    std::map<std::pair<Index, Index>, int> freq;
    for (const auto& per_sub : networks) {
      if (per_sub.size() != len) throw DomainError("subsample paths differ in length");
      for (const auto& e : per_sub[l].edges) ++freq[e];
    }
    double total = 0.0;
    for (const auto& [edge, c] : freq) {
      const double theta = static_cast<double>(c) / static_cast<double>(networks.size());
      total += 2.0 * theta * (1.0 - theta);
    }
    out[l] = total / static_cast<double>(pairs);
  }
  return out;
}

/// With lambdas decreasing: monotonize by running maximum from the largest
/// lambda, then pick the smallest lambda whose monotonized instability is
/// still <= beta.
inline StarsResult stars_from_networks(const std::vector<double>& lambdas,
                                       const std::vector<std::vector<EdgeSet>>& networks, double beta) {
  validate_lambdas(lambdas);
  StarsResult res;
  res.lambdas = lambdas;
  res.instability = edge_instability(networks);
  if (res.instability.size() != lambdas.size()) throw DomainError("instability length mismatch");
  res.monotone_instability = res.instability;
  for (std::size_t l = 1; l < lambdas.size(); ++l)
    res.monotone_instability[l] = std::max(res.monotone_instability[l], res.monotone_instability[l - 1]);
  if (res.monotone_instability.front() > beta) {
    // nothing is stable enough; fall back to the densest end and flag it
    res.warning = true;
    res.index = lambdas.size() - 1;
  } else {
    res.index = 0;
    for (std::size_t l = 0; l < lambdas.size(); ++l)
      if (res.monotone_instability[l] <= beta) res.index = l;
  }
  res.lambda_star = lambdas[res.index];
  return res;
}

/// Fits a regularization path to a data set on a fixed lambda grid.
using PathFitter = std::function<RegularizationPath(const CountMatrix&, const std::vector<double>&)>;

/// Fits every subsample and applies stars_from_networks on `block`. Pass
/// precomputed `subsamples` to share them between several calls.
inline StarsResult stars_select(const PathFitter& fitter, const CountMatrix& x, const std::vector<double>& lambdas,
                                const std::vector<Index>& block, const StarsConfig& cfg,
                                const std::vector<std::vector<Index>>* subsamples = nullptr) {
  validate_lambdas(lambdas);
  std::vector<std::vector<Index>> own;
  if (!subsamples) {
    own = draw_subsamples(x.samples(), cfg);
    subsamples = &own;
  }
  std::vector<std::vector<EdgeSet>> networks(subsamples->size());
  auto fit_one = [&](std::size_t s) {
    const RegularizationPath path = fitter(subsample_rows(x, (*subsamples)[s]), lambdas);
    for (const auto& est : path.estimates) networks[s].push_back(edges_from_precision(est.omega, block));
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, cfg.workers)), networks.size());
  if (workers <= 1) {
    for (std::size_t s = 0; s < networks.size(); ++s) fit_one(s);
  } else {
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
          for (std::size_t s = next++; s < networks.size(); s = next++) {
            try {
              fit_one(s);
            } catch (...) {
              std::lock_guard lock(err_mu);
              if (!err) err = std::current_exception();
            }
          }
        });
    }
    if (err) std::rethrow_exception(err);
  }
  return stars_from_networks(lambdas, networks, cfg.beta);
}

}  // namespace alrnet
