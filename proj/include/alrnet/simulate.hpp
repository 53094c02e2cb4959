#pragma once

// Ground-truth precision matrices and logistic-normal-multinomial datasets.

#include "alrnet/common.hpp"
#include "alrnet/compglasso.hpp"
#include "alrnet/evaluate.hpp"
#include "alrnet/transforms.hpp"

#include <numeric>
#include <optional>
#include <random>
#include <string>

namespace alrnet {

enum class NetworkKind { chain, random, hub };
enum class DepthRegime { low, high };
enum class Variation { low, high };

inline std::string to_string(NetworkKind k) {
  switch (k) {
    case NetworkKind::chain: return "chain";
    case NetworkKind::random: return "random";
    case NetworkKind::hub: return "hub";
  }
  return "?";
}
inline std::string to_string(DepthRegime d) { return d == DepthRegime::low ? "low" : "high"; }
inline std::string to_string(Variation v) { return v == Variation::low ? "low" : "high"; }

inline NetworkKind parse_network_kind(const std::string& s) {
  if (s == "chain") return NetworkKind::chain;
  if (s == "random") return NetworkKind::random;
  if (s == "hub") return NetworkKind::hub;
  throw DomainError("unknown network kind: " + s);
}
inline DepthRegime parse_depth(const std::string& s) {
  if (s == "low") return DepthRegime::low;
  if (s == "high") return DepthRegime::high;
  throw DomainError("unknown depth regime: " + s);
}
inline Variation parse_variation(const std::string& s) {
  if (s == "low") return Variation::low;
  if (s == "high") return Variation::high;
  throw DomainError("unknown variation regime: " + s);
}

/// Deterministic 64-bit mixing of seeds (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline Matrix gen_chain(Index dim) {
  if (dim < 2) throw DomainError("network dimension must be at least 2");
  Matrix omega = Matrix::Zero(dim, dim);
  for (Index k = 0; k < dim; ++k) {
    omega(k, k) = 1.5;
    if (k + 1 < dim) omega(k, k + 1) = omega(k + 1, k) = 0.5;
  }
  return omega;
}

namespace detail {

/// Unit-weight adjacency -> PD precision: diagonal |lambda_min| + 0.2, then the
/// whole matrix scaled so the diagonal equals 1.5.
inline Matrix pd_from_adjacency(const Matrix& adjacency) {
  const Index dim = adjacency.rows();
  const double shift = std::abs(min_eigenvalue(adjacency)) + 0.2;
  Matrix omega = adjacency + shift * Matrix::Identity(dim, dim);
  omega *= 1.5 / shift;
  return omega;
}

}  // namespace detail

/// Off-diagonal pairs independently connected with probability min(1, 3/dim).
inline Matrix gen_random(Index dim, std::uint64_t seed) {
  if (dim < 2) throw DomainError("network dimension must be at least 2");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution edge(std::min(1.0, 3.0 / static_cast<double>(dim)));
  Matrix adj = Matrix::Zero(dim, dim);
  for (Index k = 0; k < dim; ++k)
    for (Index l = k + 1; l < dim; ++l)
      if (edge(rng)) adj(k, l) = adj(l, k) = 1.0;
  return detail::pd_from_adjacency(adj);
}

/// Random partition into ceil(dim/20) groups; element 0 of each group is its hub.
inline std::vector<std::vector<Index>> hub_partition(Index dim, std::uint64_t seed) {
  if (dim < 2) throw DomainError("network dimension must be at least 2");
  std::mt19937_64 rng(seed);
  std::vector<Index> order(static_cast<std::size_t>(dim));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  const Index groups = (dim + 19) / 20;
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(groups));
  for (Index i = 0; i < dim; ++i) out[static_cast<std::size_t>(i % groups)].push_back(order[static_cast<std::size_t>(i)]);
  return out;
}

inline Matrix gen_hub(Index dim, std::uint64_t seed) {
  Matrix adj = Matrix::Zero(dim, dim);
  for (const auto& group : hub_partition(dim, seed))
    for (std::size_t m = 1; m < group.size(); ++m) adj(group[0], group[m]) = adj(group[m], group[0]) = 1.0;
  return detail::pd_from_adjacency(adj);
}

struct NetworkSpec {
  NetworkKind kind = NetworkKind::chain;
  Index dimension = 2;  ///< K+1
  std::uint64_t seed = 0;
};

inline Matrix generate_network(const NetworkSpec& spec) {
  switch (spec.kind) {
    case NetworkKind::chain: return gen_chain(spec.dimension);
    case NetworkKind::random: return gen_random(spec.dimension, spec.seed);
    case NetworkKind::hub: return gen_hub(spec.dimension, spec.seed);
  }
  throw DomainError("unknown network kind");
}

struct ScenarioSpec {
  NetworkSpec network;
  DepthRegime depth = DepthRegime::low;
  Variation variation = Variation::low;
  Index n = 100;
  std::optional<Vector> mu;  ///< defaults to zero
  std::uint64_t replicate_seed = 0;
  /// Overrides the regime's depth interval.
  std::optional<std::pair<double, double>> depth_range;
};

inline std::pair<double, double> depth_interval(const ScenarioSpec& s) {
  if (s.depth_range) return *s.depth_range;
  return s.depth == DepthRegime::low ? std::pair{20000.0, 40000.0} : std::pair{100000.0, 200000.0};
}

struct SimulatedData {
  CountMatrix counts;  ///< n x (K+2); the last taxon is the true reference
  Matrix omega;        ///< precision actually used (after the variation scaling)
  EdgeSet edges;
  Matrix z;            ///< n x (K+1) latent ALR values
  Matrix p;            ///< n x (K+2) compositions
};

/// Draws from Multinomial(depth, p) by sequential binomials.
template <class Rng>
std::vector<std::int64_t> draw_multinomial(std::int64_t depth, const Vector& p, Rng& rng) {
  std::vector<std::int64_t> out(static_cast<std::size_t>(p.size()), 0);
  std::int64_t remaining = depth;
  double mass = 1.0;
  for (Index k = 0; k + 1 < p.size() && remaining > 0; ++k) {
    const double prob = mass > 0.0 ? std::clamp(p(k) / mass, 0.0, 1.0) : 0.0;
    std::binomial_distribution<std::int64_t> bin(remaining, prob);
    const std::int64_t c = bin(rng);
    out[static_cast<std::size_t>(k)] = c;
    remaining -= c;
    mass -= p(k);
  }
  out.back() += remaining;
  return out;
}

/// Each row uses its own generator seeded from (replicate_seed, row index).
inline SimulatedData simulate_dataset(const ScenarioSpec& s) {
  if (s.n < 2) throw DomainError("need at least two samples");
  Matrix omega = generate_network(s.network);
  if (s.variation == Variation::high) omega /= 5.0;
  if (!is_pd(omega)) throw DomainError("precision matrix is not positive definite");
  const Index dim = omega.rows();
  const Vector mu = s.mu.value_or(Vector::Zero(dim));
  if (mu.size() != dim) throw DomainError("mean has the wrong dimension");

  // z = mu + L^{-T} e with Omega = L L'
  Eigen::LLT<Matrix> llt(omega);
  const Matrix upper = llt.matrixU();
  const auto [lo, hi] = depth_interval(s);

  SimulatedData out;
  out.omega = omega;
  out.edges = edges_from_precision(omega);
  out.z.resize(s.n, dim);
  out.p.resize(s.n, dim + 1);
  out.counts.counts.resize(s.n, dim + 1);
  for (Index t = 0; t <= dim; ++t) out.counts.taxon_ids.push_back("taxon_" + std::to_string(t + 1));

  TaxonList layout(static_cast<std::size_t>(dim));
  std::iota(layout.begin(), layout.end(), TaxonId{0});
  const TaxonId reference = static_cast<TaxonId>(dim);

  for (Index i = 0; i < s.n; ++i) {
    std::mt19937_64 rng(mix_seed(s.replicate_seed, static_cast<std::uint64_t>(i)));
    std::normal_distribution<double> normal;
    Vector e(dim);
    for (Index k = 0; k < dim; ++k) e(k) = normal(rng);
    const Vector zi = mu + upper.triangularView<Eigen::Upper>().solve(e);
    std::uniform_real_distribution<double> unif(lo, hi);
    const auto depth = static_cast<std::int64_t>(std::llround(unif(rng)));
    const Composition pi = softmax_inverse(zi, reference, layout);
    const auto xi = draw_multinomial(depth, pi.probs, rng);
    out.z.row(i) = zi.transpose();
    out.p.row(i) = pi.probs.transpose();
    for (Index t = 0; t <= dim; ++t) out.counts.counts(i, t) = xi[static_cast<std::size_t>(t)];
  }
  return out;
}

}  // namespace alrnet
