#pragma once

// Additive log-ratio coordinates, their inverse, and the linear map between
// ALR coordinates taken against two different reference taxa.

#include "alrnet/common.hpp"

#include <numeric>
#include <unordered_map>

namespace alrnet {

struct Composition {
  Vector probs;

  std::size_t num_taxa() const { return static_cast<std::size_t>(probs.size()); }
};

inline void validate_composition(const Composition& p, double sum_tol = 1e-12) {
  if (p.probs.size() < 2) throw DomainError("composition needs at least two parts");
  for (Index k = 0; k < p.probs.size(); ++k)
    if (!(p.probs(k) > 0.0) || !std::isfinite(p.probs(k)))
      throw DomainError("composition entries must be finite and strictly positive");
  if (std::abs(p.probs.sum() - 1.0) > sum_tol)
    throw DomainError("composition does not sum to one");
}

/// ALR coordinates. `layout[j]` names the taxon whose log ratio sits in slot j.
struct AlrVector {
  Vector values;
  TaxonId reference = 0;
  TaxonList layout;
};

inline void validate_layout(std::size_t num_taxa, TaxonId reference, const TaxonList& layout) {
  if (reference >= num_taxa) throw LayoutError("reference taxon out of range");
  if (layout.size() + 1 != num_taxa) throw LayoutError("layout must list every non-reference taxon");
  std::vector<char> seen(num_taxa, 0);
  for (TaxonId t : layout) {
    if (t >= num_taxa) throw LayoutError("layout taxon out of range");
    if (t == reference) throw LayoutError("reference taxon appears in layout");
    if (seen[t]) throw LayoutError("layout repeats a taxon");
    seen[t] = 1;
  }
}

/// Slot order used throughout: non-candidates ascending, then the remaining
/// candidates ascending. The first `num_taxa - |candidates|` slots are then the
/// same taxa whichever candidate is the reference.
inline TaxonList canonical_layout(std::size_t num_taxa, const TaxonList& candidates,
                                  TaxonId reference) {
  std::vector<char> is_candidate(num_taxa, 0);
  for (TaxonId c : candidates) {
    if (c >= num_taxa) throw LayoutError("candidate taxon out of range");
    is_candidate[c] = 1;
  }
  if (reference >= num_taxa || !is_candidate[reference])
    throw LayoutError("reference must be one of the candidate taxa");
  TaxonList layout;
  layout.reserve(num_taxa - 1);
  for (TaxonId t = 0; t < num_taxa; ++t)
    if (!is_candidate[t]) layout.push_back(t);
  for (TaxonId t = 0; t < num_taxa; ++t)
    if (is_candidate[t] && t != reference) layout.push_back(t);
  return layout;
}

/// Layout after switching the reference from `from` to `to`: the old reference
/// takes over the slot previously held by the new one. Operators between a
/// layout and its swapped layout are involutions.
inline TaxonList swapped_layout(const TaxonList& layout, TaxonId from, TaxonId to) {
  TaxonList out = layout;
  auto it = std::find(out.begin(), out.end(), to);
  if (it == out.end()) throw LayoutError("new reference is not in the input layout");
  if (std::find(out.begin(), out.end(), from) != out.end())
    throw LayoutError("old reference appears in the input layout");
  *it = from;
  return out;
}

inline AlrVector alr(const Composition& p, TaxonId reference, const TaxonList& layout) {
  validate_layout(p.num_taxa(), reference, layout);
  for (Index k = 0; k < p.probs.size(); ++k)
    if (!(p.probs(k) > 0.0)) throw DomainError("alr of a zero or negative probability");
  AlrVector z{Vector(static_cast<Index>(layout.size())), reference, layout};
  const double log_ref = std::log(p.probs(static_cast<Index>(reference)));
  for (std::size_t j = 0; j < layout.size(); ++j)
    z.values(static_cast<Index>(j)) = std::log(p.probs(static_cast<Index>(layout[j]))) - log_ref;
  return z;
}

/// Inverse ALR. The reference receives 1 / (1 + sum(exp(z))); evaluated with a
/// max shift so large coordinates do not overflow.
inline Composition softmax_inverse(const Vector& z, TaxonId reference, const TaxonList& layout) {
  const std::size_t num_taxa = layout.size() + 1;
  validate_layout(num_taxa, reference, layout);
  if (static_cast<std::size_t>(z.size()) != layout.size())
    throw LayoutError("coordinate count does not match layout");
  if (!z.allFinite()) throw DomainError("softmax_inverse of non-finite coordinates");
  const double shift = std::max(0.0, z.size() ? z.maxCoeff() : 0.0);
  Composition p{Vector(static_cast<Index>(num_taxa))};
  double total = std::exp(-shift);
  p.probs(static_cast<Index>(reference)) = total;
  for (std::size_t j = 0; j < layout.size(); ++j) {
    const double e = std::exp(z(static_cast<Index>(j)) - shift);
    p.probs(static_cast<Index>(layout[j])) = e;
    total += e;
  }
  p.probs /= total;
  return p;
}

inline Composition softmax_inverse(const AlrVector& z) {
  return softmax_inverse(z.values, z.reference, z.layout);
}

struct ReferenceChangeOperator {
  Matrix matrix;
  TaxonId from_reference = 0;
  TaxonId to_reference = 0;
  TaxonList layout_in;
  TaxonList layout_out;

  Vector apply(const Vector& z) const { return matrix * z; }

  /// Exact check; entries are small integers so Q*Q is computed without rounding.
  bool involutory() const {
    const Matrix sq = matrix * matrix;
    return (sq - Matrix::Identity(matrix.rows(), matrix.cols())).cwiseAbs().maxCoeff() == 0.0;
  }

  Matrix inverse() const {
    if (involutory()) return matrix;
    return matrix.fullPivLu().inverse();
  }
};

/// Matrix Q with alr(p, to_ref, layout_out) = Q * alr(p, from_ref, layout_in).
inline ReferenceChangeOperator reference_change_operator(TaxonId from_ref, TaxonId to_ref,
                                                         const TaxonList& layout_in,
                                                         const TaxonList& layout_out) {
  if (from_ref == to_ref) throw LayoutError("reference change needs two distinct references");
  const std::size_t num_taxa = layout_in.size() + 1;
  validate_layout(num_taxa, from_ref, layout_in);
  if (layout_out.size() + 1 != num_taxa) throw LayoutError("layouts differ in length");
  validate_layout(num_taxa, to_ref, layout_out);

  std::unordered_map<TaxonId, Index> slot_in;
  for (std::size_t j = 0; j < layout_in.size(); ++j) slot_in[layout_in[j]] = static_cast<Index>(j);
  const Index to_slot = slot_in.at(to_ref);

  const Index d = static_cast<Index>(layout_in.size());
  ReferenceChangeOperator q{Matrix::Zero(d, d), from_ref, to_ref, layout_in, layout_out};
  for (Index j = 0; j < d; ++j) {
    const TaxonId t = layout_out[static_cast<std::size_t>(j)];
    if (t != from_ref) q.matrix(j, slot_in.at(t)) += 1.0;
    q.matrix(j, to_slot) -= 1.0;
  }
  return q;
}

/// The two-candidate case with taxa 0..K+1: reference K+1 -> K, all other
/// taxa in natural order. Gives the block form [[I_K, -1], [0', -1]].
inline ReferenceChangeOperator last_two_swap_operator(std::size_t K) {
  const std::size_t num_taxa = K + 2;
  TaxonList layout_in(num_taxa - 1);
  std::iota(layout_in.begin(), layout_in.end(), TaxonId{0});
  const TaxonList layout_out = swapped_layout(layout_in, K + 1, K);
  return reference_change_operator(K + 1, K, layout_in, layout_out);
}

struct GaussianParams {
  Vector mu;
  Matrix sigma;
  Matrix omega;
};

inline GaussianParams make_gaussian(const Vector& mu, const Matrix& sigma) {
  return {mu, sigma, spd_inverse(sigma)};
}

inline void validate_gaussian(const GaussianParams& g) {
  const Index d = g.mu.size();
  if (g.sigma.rows() != d || g.sigma.cols() != d || g.omega.rows() != d || g.omega.cols() != d)
    throw DomainError("gaussian parameter dimensions disagree");
  if (!is_symmetric(g.sigma, 1e-12 * std::max(1.0, g.sigma.cwiseAbs().maxCoeff())) ||
      !is_symmetric(g.omega, 1e-12 * std::max(1.0, g.omega.cwiseAbs().maxCoeff())))
    throw DomainError("covariance and precision must be symmetric");
  const Matrix prod = g.sigma * g.omega;
  const double scale = g.sigma.norm() * g.omega.norm();
  if ((prod - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, scale))
    throw DomainError("precision is not the inverse of the covariance");
}

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// mu -> Q mu, Sigma -> Q Sigma Q', Omega -> Q^{-T} Omega Q^{-1}.
inline GaussianParams transform_gaussian(const GaussianParams& g, const ReferenceChangeOperator& q) {
  if (q.matrix.rows() != g.mu.size()) throw LayoutError("operator dimension mismatch");
  const Matrix qinv = q.inverse();
  GaussianParams out{q.matrix * g.mu, symmetrized(q.matrix * g.sigma * q.matrix.transpose()),
                     symmetrized(qinv.transpose() * g.omega * qinv)};
  if (!is_psd(out.sigma) || !is_psd(out.omega))
    throw NumericalError("transformed gaussian parameters are not positive definite");
  return out;
}

/// Precision under the new reference: Q^{-T} Omega Q^{-1}.
inline Matrix transform_precision(const Matrix& omega, const ReferenceChangeOperator& q) {
  const Matrix qinv = q.inverse();
  return symmetrized(qinv.transpose() * omega * qinv);
}

struct InvarianceReport {
  double max_block_discrepancy = 0.0;
  /// Discrepancy divided by the largest absolute entry of the block.
  double relative_discrepancy = 0.0;
};

/// Inverts Sigma and Q Sigma Q' independently and compares the leading
/// block_size x block_size blocks of the two precisions.
inline InvarianceReport invariance_oracle(const Matrix& sigma, const ReferenceChangeOperator& q,
                                          Index block_size) {
  if (sigma.rows() != q.matrix.rows() || !is_symmetric(sigma, 1e-12 * sigma.cwiseAbs().maxCoeff()))
    throw DomainError("sigma must be symmetric and match the operator");
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("sigma is singular or indefinite");
  const Matrix omega = spd_inverse(sigma);
  const Matrix omega_p = spd_inverse(symmetrized(q.matrix * sigma * q.matrix.transpose()));
  const auto a = omega.topLeftCorner(block_size, block_size);
  const auto b = omega_p.topLeftCorner(block_size, block_size);
  InvarianceReport rep;
  rep.max_block_discrepancy = (a - b).cwiseAbs().maxCoeff();
  const double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  rep.relative_discrepancy = scale > 0.0 ? rep.max_block_discrepancy / scale : 0.0;
  return rep;
}

/// Last-two-swap form: sigma is (K+1)x(K+1), compares the K x K blocks.
inline InvarianceReport invariance_oracle(const Matrix& sigma, std::size_t K) {
  if (static_cast<std::size_t>(sigma.rows()) != K + 1) throw DomainError("sigma must be (K+1)x(K+1)");
  return invariance_oracle(sigma, last_two_swap_operator(K), static_cast<Index>(K));
}

}  // namespace alrnet
