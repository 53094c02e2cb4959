#pragma once

// Simulation grid: both methods, true and false reference, per scenario.

#include "alrnet/compglasso.hpp"
#include "alrnet/evaluate.hpp"
#include "alrnet/glasso.hpp"
#include "alrnet/simulate.hpp"

#include <array>
#include <atomic>
#include <mutex>
#include <thread>

namespace alrnet {

enum class Method { inv_glasso, inv_comp_glasso };

inline std::string to_string(Method m) { return m == Method::inv_glasso ? "inv-glasso" : "inv-comp-glasso"; }

inline Method parse_method(const std::string& s) {
  if (s == "inv-glasso") return Method::inv_glasso;
  if (s == "inv-comp-glasso") return Method::inv_comp_glasso;
  throw DomainError("unknown method: " + s);
}

struct ScenarioCell {
  NetworkKind kind = NetworkKind::chain;
  DepthRegime depth = DepthRegime::low;
  Variation variation = Variation::low;

  std::string label() const {
    return to_string(kind) + "_depth-" + to_string(depth) + "_var-" + to_string(variation);
  }
};

/// The 3 x 2 x 2 grid in a fixed order.
inline std::vector<ScenarioCell> full_grid() {
  std::vector<ScenarioCell> out;
  for (auto k : {NetworkKind::chain, NetworkKind::random, NetworkKind::hub})
    for (auto d : {DepthRegime::high, DepthRegime::low})
      for (auto v : {Variation::high, Variation::low}) out.push_back({k, d, v});
  return out;
}

struct ExperimentSettings {
  Index n = 50;
  std::size_t K = 19;
  int replicates = 10;
  std::size_t lambda_count = 30;
  double lambda_ratio = 0.01;
  std::uint64_t master_seed = 1;
  FitConfig fit;
  /// Replicates run concurrently.
  int workers = 1;
};

inline std::uint64_t network_seed(const ExperimentSettings& s, NetworkKind kind) {
  return mix_seed(s.master_seed, 1000 + static_cast<std::uint64_t>(kind));
}

inline std::uint64_t replicate_seed(const ExperimentSettings& s, const ScenarioCell& c, int replicate) {
  const std::uint64_t cell = static_cast<std::uint64_t>(c.kind) * 4 + static_cast<std::uint64_t>(c.depth) * 2 +
                             static_cast<std::uint64_t>(c.variation);
  return mix_seed(mix_seed(s.master_seed, cell + 1), static_cast<std::uint64_t>(replicate));
}

inline ScenarioSpec scenario_spec(const ExperimentSettings& s, const ScenarioCell& c, int replicate) {
  ScenarioSpec spec;
  spec.network = {c.kind, static_cast<Index>(s.K + 1), network_seed(s, c.kind)};
  spec.depth = c.depth;
  spec.variation = c.variation;
  spec.n = s.n;
  spec.replicate_seed = replicate_seed(s, c, replicate);
  return spec;
}

struct ReplicateOutcome {
  int replicate = 0;
  std::vector<double> lambdas;
  /// [method]: true-vs-false reference comparison; tpr/fpr of the true reference.
  std::array<std::vector<MetricsRecord>, 2> comparison;
  /// [method][reference], reference 0 = true (last taxon), 1 = false.
  std::array<std::array<std::vector<RocPoint>, 2>, 2> roc;
  int descent_violations = 0;
  int comp_unconverged = 0;
  int glasso_unconverged = 0;
  double max_glasso_kkt = 0.0;
};

/// One replicate: simulate, then fit both methods under both references on a
/// shared lambda grid derived from the true-reference empirical data.
inline ReplicateOutcome run_replicate(const ScenarioCell& cell, const ExperimentSettings& s, int replicate) {
  const SimulatedData data = simulate_dataset(scenario_spec(s, cell, replicate));
  const TaxonId true_ref = s.K + 1;
  const TaxonId false_ref = s.K;
  const TaxonList candidates{false_ref, true_ref};
  const std::vector<Index> block = leading_indices(static_cast<Index>(s.K));
  const EdgeSet truth = edges_from_precision(data.omega, block);

  ReplicateOutcome out;
  out.replicate = replicate;
  out.lambdas = log_spaced_lambdas(empirical_lambda_max(data.counts, candidates, s.fit), s.lambda_count,
                                   s.lambda_ratio);

  std::array<std::array<RegularizationPath, 2>, 2> paths;
  const std::array<TaxonId, 2> refs{true_ref, false_ref};
  for (int r = 0; r < 2; ++r) {
    paths[0][static_cast<std::size_t>(r)] = empirical_glasso_path(data.counts, refs[static_cast<std::size_t>(r)], candidates, out.lambdas, s.fit);
    CompPath comp = fit_path(data.counts, refs[static_cast<std::size_t>(r)], candidates, out.lambdas, s.fit);
    for (const auto& d : comp.diagnostics) {
      out.descent_violations += d.descent_violations;
      out.comp_unconverged += d.converged ? 0 : 1;
    }
    paths[1][static_cast<std::size_t>(r)] = std::move(comp.path);
  }
  for (int r = 0; r < 2; ++r)
    for (const auto& e : paths[0][static_cast<std::size_t>(r)].estimates) {
      out.glasso_unconverged += e.converged ? 0 : 1;
      out.max_glasso_kkt = std::max(out.max_glasso_kkt, e.kkt_residual);
    }
  for (std::size_t m = 0; m < 2; ++m) {
    out.comparison[m] = compare_paths(paths[m][0], paths[m][1], block, &truth, replicate);
    for (std::size_t r = 0; r < 2; ++r) out.roc[m][r] = roc_points(paths[m][r], truth, block);
  }
  return out;
}

struct ScenarioOutcome {
  ScenarioCell cell;
  std::vector<ReplicateOutcome> replicates;

  std::vector<AggregateRecord> aggregate_for(Method m) const {
    std::vector<std::vector<MetricsRecord>> tables;
    for (const auto& r : replicates) tables.push_back(r.comparison[static_cast<std::size_t>(m)]);
    return aggregate(tables);
  }

  std::vector<RocPoint> mean_roc(Method m, int reference) const {
    std::vector<std::vector<RocPoint>> curves;
    for (const auto& r : replicates) curves.push_back(r.roc[static_cast<std::size_t>(m)][static_cast<std::size_t>(reference)]);
    return average_roc(curves);
  }

  int descent_violations() const {
    int v = 0;
    for (const auto& r : replicates) v += r.descent_violations;
    return v;
  }
};

/// Runs replicates 0..replicates-1; results are ordered by replicate whatever
/// the worker count.
inline ScenarioOutcome run_scenario(const ScenarioCell& cell, const ExperimentSettings& s) {
  ScenarioOutcome out{cell, std::vector<ReplicateOutcome>(static_cast<std::size_t>(s.replicates))};
  std::atomic<int> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  auto work = [&] {
    for (int r = next++; r < s.replicates; r = next++) {
      try {
        out.replicates[static_cast<std::size_t>(r)] = run_replicate(cell, s, r);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min(s.workers, s.replicates));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (err) std::rethrow_exception(err);
  return out;
}

// ---------------------------------------------------------------------------
// checks shared by the reproduce report and the acceptance suite

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Median over lambda of the replicate-averaged NMS curve.
inline double median_nms(const ScenarioOutcome& o, Method m) {
  std::vector<double> curve;
  for (const auto& a : o.aggregate_for(m))
    if (a.nms.count) curve.push_back(a.nms.mean);
  return median(curve);
}

inline double min_nms(const ScenarioOutcome& o, Method m) {
  double lo = 1.0;
  for (const auto& r : o.replicates)
    for (const auto& rec : r.comparison[static_cast<std::size_t>(m)])
      if (rec.nms) lo = std::min(lo, *rec.nms);
  return lo;
}

inline double min_hamming(const ScenarioOutcome& o, Method m) {
  double lo = 1.0;
  for (const auto& r : o.replicates)
    for (const auto& rec : r.comparison[static_cast<std::size_t>(m)])
      if (rec.hamming) lo = std::min(lo, *rec.hamming);
  return lo;
}

/// Largest pointwise gap between the true- and false-reference mean ROC curves.
inline double roc_gap(const ScenarioOutcome& o, Method m) {
  const auto a = o.mean_roc(m, 0);
  const auto b = o.mean_roc(m, 1);
  double gap = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) {
    gap = std::max(gap, std::abs(a[l].fpr - b[l].fpr));
    if (a[l].tpr && b[l].tpr) gap = std::max(gap, std::abs(*a[l].tpr - *b[l].tpr));
    else if (a[l].tpr.has_value() != b[l].tpr.has_value()) gap = std::numeric_limits<double>::infinity();
  }
  return gap;
}

}  // namespace alrnet
