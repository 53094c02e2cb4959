#pragma once

// Similarity and recovery metrics between precision estimates and networks.

#include "alrnet/common.hpp"
#include "alrnet/glasso.hpp"

#include <optional>
#include <set>
#include <utility>

namespace alrnet {

/// Undirected simple graph on nodes 0..node_count-1; pairs stored with first < second.
struct EdgeSet {
  Index node_count = 0;
  std::set<std::pair<Index, Index>> edges;

  void add(Index a, Index b) {
    if (a == b) throw DomainError("self-loops are not edges");
    if (a < 0 || b < 0 || a >= node_count || b >= node_count) throw DomainError("edge node out of range");
    edges.emplace(std::min(a, b), std::max(a, b));
  }
  bool contains(Index a, Index b) const { return edges.count({std::min(a, b), std::max(a, b)}) > 0; }
  std::size_t size() const { return edges.size(); }
  Index possible_pairs() const { return node_count * (node_count - 1) / 2; }

  bool operator==(const EdgeSet&) const = default;
};

/// Nonzero pattern of omega restricted to `block`, renumbered 0..|block|-1.
/// Solver zeros are exact; entries below 1e-12 in magnitude are also dropped.
inline EdgeSet edges_from_precision(const Matrix& omega, const std::vector<Index>& block) {
  EdgeSet out{static_cast<Index>(block.size()), {}};
  for (std::size_t a = 0; a < block.size(); ++a)
    for (std::size_t b = a + 1; b < block.size(); ++b) {
      const double v = omega(block[a], block[b]);
      if (v != 0.0 && std::abs(v) >= 1e-12) out.edges.emplace(static_cast<Index>(a), static_cast<Index>(b));
    }
  return out;
}

inline EdgeSet edges_from_precision(const Matrix& omega) {
  return edges_from_precision(omega, leading_indices(omega.rows()));
}

/// 1 - |A-B|_1 / (|A|_1 + |B|_1); absent when both matrices are zero.
inline std::optional<double> nms(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DomainError("nms of differently shaped matrices");
  const double denom = a.cwiseAbs().sum() + b.cwiseAbs().sum();
  if (denom == 0.0) return std::nullopt;
  return 1.0 - (a - b).cwiseAbs().sum() / denom;
}

/// |A and B| / |A or B|; absent when both sets are empty.
inline std::optional<double> jaccard(const EdgeSet& a, const EdgeSet& b) {
  if (a.node_count != b.node_count) throw DomainError("jaccard of networks on different node sets");
  std::size_t common = 0;
  for (const auto& e : a.edges) common += b.edges.count(e);
  const std::size_t uni = a.size() + b.size() - common;
  if (uni == 0) return std::nullopt;
  return static_cast<double>(common) / static_cast<double>(uni);
}

/// Hamming similarity from a count of differing undirected edges out of
/// `possible_pairs` unordered pairs; each differing edge is two ordered entries
/// of the adjacency matrix, so this equals 1 - |A - B|_1 / (N(N-1)).
inline double hamming_from_counts(std::size_t differing, std::size_t possible_pairs) {
  if (possible_pairs == 0) return 1.0;
  if (differing > possible_pairs) throw DomainError("more differing edges than pairs");
  return 1.0 - static_cast<double>(2 * differing) / static_cast<double>(2 * possible_pairs);
}

/// 1 - |adj(A) - adj(B)|_1 / (N(N-1)).
inline double hamming(const EdgeSet& a, const EdgeSet& b) {
  if (a.node_count != b.node_count) throw DomainError("hamming of networks on different node sets");
  std::size_t common = 0;
  for (const auto& e : a.edges) common += b.edges.count(e);
  return hamming_from_counts(a.size() + b.size() - 2 * common, static_cast<std::size_t>(a.possible_pairs()));
}

struct RocPoint {
  double fpr = 0.0;
  std::optional<double> tpr;  ///< absent when the truth has no edges
};

inline RocPoint roc_point(const EdgeSet& estimate, const EdgeSet& truth) {
  if (estimate.node_count != truth.node_count) throw DomainError("roc on different node sets");
  std::size_t tp = 0;
  for (const auto& e : estimate.edges) tp += truth.edges.count(e);
  const std::size_t fp = estimate.size() - tp;
  const Index negatives = truth.possible_pairs() - static_cast<Index>(truth.size());
  RocPoint pt;
  pt.fpr = negatives > 0 ? static_cast<double>(fp) / static_cast<double>(negatives) : 0.0;
  if (!truth.edges.empty()) pt.tpr = static_cast<double>(tp) / static_cast<double>(truth.size());
  return pt;
}

/// One point per lambda, evaluated on `block` of each estimate.
inline std::vector<RocPoint> roc_points(const RegularizationPath& path, const EdgeSet& truth,
                                        const std::vector<Index>& block) {
  std::vector<RocPoint> out;
  out.reserve(path.estimates.size());
  for (const auto& est : path.estimates) out.push_back(roc_point(edges_from_precision(est.omega, block), truth));
  return out;
}

/// Pointwise average over replicates at matched lambda indices.
inline std::vector<RocPoint> average_roc(const std::vector<std::vector<RocPoint>>& curves) {
  if (curves.empty()) return {};
  const std::size_t len = curves.front().size();
  std::vector<RocPoint> out(len);
  for (std::size_t l = 0; l < len; ++l) {
    double fpr = 0.0, tpr = 0.0;
    std::size_t tpr_count = 0;
    for (const auto& c : curves) {
      if (c.size() != len) throw DomainError("roc curves differ in length");
      fpr += c[l].fpr;
      if (c[l].tpr) {
        tpr += *c[l].tpr;
        ++tpr_count;
      }
    }
    out[l].fpr = fpr / static_cast<double>(curves.size());
    if (tpr_count) out[l].tpr = tpr / static_cast<double>(tpr_count);
  }
  return out;
}

/// Trapezoidal area under the curve through (0,0), the points sorted by FPR,
/// and (1,1). A convenience summary, not one of the similarity criteria.
inline double roc_auc(const std::vector<RocPoint>& points) {
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
  for (const auto& p : points)
    if (p.tpr) pts.emplace_back(p.fpr, *p.tpr);
  pts.emplace_back(1.0, 1.0);
  std::stable_sort(pts.begin(), pts.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first || (a.first == b.first && a.second < b.second); });
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].first - pts[i - 1].first) * 0.5 * (pts[i].second + pts[i - 1].second);
  return area;
}

/// One row of the per-replicate metrics table.
struct MetricsRecord {
  int replicate = 0;
  double lambda = 0.0;
  std::optional<double> nms;
  std::optional<double> jaccard;
  std::optional<double> hamming;
  std::optional<double> tpr;
  std::optional<double> fpr;
};

/// Compares two paths lambda by lambda on `block`; if `truth` is given the
/// TPR/FPR columns describe path `a` against it.
inline std::vector<MetricsRecord> compare_paths(const RegularizationPath& a, const RegularizationPath& b,
                                                const std::vector<Index>& block,
                                                const EdgeSet* truth = nullptr, int replicate = 0) {
  if (a.estimates.size() != b.estimates.size()) throw DomainError("paths differ in length");
  std::vector<MetricsRecord> out;
  for (std::size_t l = 0; l < a.estimates.size(); ++l) {
    const Matrix ba = submatrix(a.estimates[l].omega, block, block);
    const Matrix bb = submatrix(b.estimates[l].omega, block, block);
    const EdgeSet ea = edges_from_precision(a.estimates[l].omega, block);
    const EdgeSet eb = edges_from_precision(b.estimates[l].omega, block);
    MetricsRecord r{replicate, a.lambdas[l], nms(ba, bb), jaccard(ea, eb), hamming(ea, eb), {}, {}};
    if (truth) {
      const RocPoint pt = roc_point(ea, *truth);
      r.tpr = pt.tpr;
      r.fpr = pt.fpr;
    }
    out.push_back(r);
  }
  return out;
}

/// Metrics of a path against a true precision matrix and its edge set.
inline std::vector<MetricsRecord> compare_to_truth(const RegularizationPath& a, const Matrix& truth_omega,
                                                   const std::vector<Index>& block, int replicate = 0) {
  const Matrix tb = submatrix(truth_omega, block, block);
  const EdgeSet truth = edges_from_precision(tb);
  std::vector<MetricsRecord> out;
  for (std::size_t l = 0; l < a.estimates.size(); ++l) {
    const Matrix ba = submatrix(a.estimates[l].omega, block, block);
    const EdgeSet ea = edges_from_precision(a.estimates[l].omega, block);
    const RocPoint pt = roc_point(ea, truth);
    out.push_back({replicate, a.lambdas[l], nms(ba, tb), jaccard(ea, truth), hamming(ea, truth), pt.tpr, pt.fpr});
  }
  return out;
}

struct Summary {
  double mean = 0.0;
  double se = 0.0;
  std::size_t count = 0;
};

/// Mean and standard error of the mean over the present values.
inline Summary summarize(const std::vector<std::optional<double>>& values) {
  Summary s;
  double sum = 0.0;
  for (const auto& v : values)
    if (v) {
      sum += *v;
      ++s.count;
    }
  if (s.count == 0) return s;
  s.mean = sum / static_cast<double>(s.count);
  if (s.count > 1) {
    double ss = 0.0;
    for (const auto& v : values)
      if (v) ss += (*v - s.mean) * (*v - s.mean);
    s.se = std::sqrt(ss / static_cast<double>(s.count - 1) / static_cast<double>(s.count));
  }
  return s;
}

struct AggregateRecord {
  std::size_t lambda_index = 0;
  double lambda_mean = 0.0;
  Summary nms, jaccard, hamming, tpr, fpr;
};

/// Aggregates per-replicate tables (all of equal length) by lambda index.
inline std::vector<AggregateRecord> aggregate(const std::vector<std::vector<MetricsRecord>>& replicates) {
  if (replicates.empty()) return {};
  const std::size_t len = replicates.front().size();
  std::vector<AggregateRecord> out(len);
  for (std::size_t l = 0; l < len; ++l) {
    std::vector<std::optional<double>> lam, n, j, h, t, f;
    for (const auto& rep : replicates) {
      if (rep.size() != len) throw DomainError("replicate tables differ in length");
      lam.emplace_back(rep[l].lambda);
      n.push_back(rep[l].nms);
      j.push_back(rep[l].jaccard);
      h.push_back(rep[l].hamming);
      t.push_back(rep[l].tpr);
      f.push_back(rep[l].fpr);
    }
    out[l] = {l, summarize(lam).mean, summarize(n), summarize(j), summarize(h), summarize(t), summarize(f)};
  }
  return out;
}

}  // namespace alrnet
