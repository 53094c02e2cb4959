#pragma once

// Graphical lasso with an entrywise penalty mask.
//
// Minimizes  -1/2 log det(Omega) + 1/2 tr(S Omega) + lambda * sum_{(k,l) in P} |omega_kl|
// where P is the set of ordered pairs inside the penalized block (off-diagonal
// only unless penalize_diagonal). In the usual unscaled form this is
// -log det + tr(S Omega) + sum rho_kl |omega_kl| with rho = 2 * lambda on P.
//
// Solved by cyclic block coordinate descent over the columns of Omega. Each
// column update is exact: the diagonal has a closed form and the off-diagonal
// part is a lasso with quadratic form (S_jj + rho_jj) * Omega_11^{-1}, solved
// by coordinate descent. W = Omega^{-1} is carried along with rank-one updates
// and refreshed once per sweep. Iterates stay positive definite and the
// objective never increases.
//
// When the penalty touches only a block P and the complementary coordinates F
// are entirely free, the free parameters have closed forms: with
// Omega_PF = -Omega_PP S_PF S_FF^{-1} and Omega_FF - Omega_FP Omega_PP^{-1} Omega_PF = S_FF^{-1},
// only Omega_PP remains, and it solves the same problem on the Schur
// complement S_PP - S_PF S_FF^{-1} S_FP with every off-diagonal entry
// penalized. The automatic route takes this reduction; the direct route runs
// the column descent on the full matrix.

#include "alrnet/common.hpp"
#include "alrnet/transforms.hpp"

#include <limits>
#include <optional>

namespace alrnet {

struct PenaltySpec {
  double lambda = 0.0;
  /// Coordinates (0-based) of the penalized block.
  std::vector<Index> penalized_block;
  bool penalize_diagonal = false;
};

inline void validate_penalty(const PenaltySpec& pen, Index dim) {
  if (!(pen.lambda >= 0.0)) throw DomainError("lambda must be nonnegative");
  if (pen.penalized_block.empty()) throw DomainError("penalized block is empty");
  for (Index k : pen.penalized_block)
    if (k < 0 || k >= dim) throw DomainError("penalized coordinate out of range");
}

/// 1 on penalized entries, 0 elsewhere.
inline Matrix penalty_mask(const PenaltySpec& pen, Index dim) {
  validate_penalty(pen, dim);
  Matrix mask = Matrix::Zero(dim, dim);
  for (Index k : pen.penalized_block)
    for (Index l : pen.penalized_block)
      if (k != l || pen.penalize_diagonal) mask(k, l) = 1.0;
  return mask;
}

enum class GlassoRoute { automatic, direct };

struct SolverConfig {
  GlassoRoute route = GlassoRoute::automatic;
  int max_outer_iters = 1000;
  /// Largest entry change in one sweep, relative to max |omega|.
  double convergence_tol = 1e-10;
  double inner_lasso_tol = 1e-12;
  /// Required KKT residual at return.
  double kkt_tol = 1e-8;
  /// Ridge added to a singular S when some entries are unpenalized.
  /// Unset means 1e-4 * trace(S) / dim.
  std::optional<double> ridge_fallback;
};

inline void validate_config(const SolverConfig& c) {
  if (c.max_outer_iters < 1) throw DomainError("max_outer_iters must be at least 1");
  if (!(c.convergence_tol > 0.0) || !(c.inner_lasso_tol > 0.0) || !(c.kkt_tol > 0.0))
    throw DomainError("solver tolerances must be positive");
  if (c.ridge_fallback && !(*c.ridge_fallback >= 0.0))
    throw DomainError("ridge_fallback must be nonnegative");
}

struct PrecisionEstimate {
  Matrix omega;
  double lambda = 0.0;
  std::optional<TaxonId> reference_index;
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;
  double kkt_residual = 0.0;
  double ridge_applied = 0.0;
  std::vector<double> objective_trace;
};

struct RegularizationPath {
  std::vector<double> lambdas;
  std::vector<PrecisionEstimate> estimates;
};

inline void validate_lambdas(const std::vector<double>& lambdas) {
  if (lambdas.empty()) throw DomainError("lambda sequence is empty");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] >= 0.0)) throw DomainError("lambda values must be nonnegative");
    if (i > 0 && !(lambdas[i] < lambdas[i - 1]))
      throw DomainError("lambda sequence must be strictly decreasing");
  }
}

namespace detail {

inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

/// -log det + tr(S Omega) + sum rho |omega| (unscaled form).
inline double weighted_objective(const Matrix& omega, const Matrix& s, const Matrix& rho) {
  double pen = 0.0;
  for (Index j = 0; j < omega.cols(); ++j)
    for (Index i = 0; i < omega.rows(); ++i)
      if (rho(i, j) != 0.0 && omega(i, j) != 0.0) pen += rho(i, j) * std::abs(omega(i, j));
  return -log_det_spd(omega) + (s.cwiseProduct(omega)).sum() + pen;
}

/// Stationarity violation of the unscaled problem given W = Omega^{-1}.
inline double weighted_kkt(const Matrix& omega, const Matrix& w, const Matrix& s, const Matrix& rho) {
  double worst = 0.0;
  for (Index j = 0; j < omega.cols(); ++j) {
    for (Index i = 0; i < omega.rows(); ++i) {
      const double g = w(i, j) - s(i, j);
      const double r = rho(i, j);
      double v;
      if (r == 0.0) {
        v = std::abs(g);
      } else if (omega(i, j) != 0.0) {
        v = std::isinf(r) ? std::numeric_limits<double>::infinity()
                          : std::abs(g - (omega(i, j) > 0.0 ? r : -r));
      } else {
        v = std::isinf(r) ? 0.0 : std::max(0.0, std::abs(g) - r);
      }
      worst = std::max(worst, v);
    }
  }
  return worst;
}

struct WeightedResult {
  Matrix omega;
  Matrix w;
  int iterations = 0;
  bool converged = false;
  double kkt = 0.0;
  std::vector<double> trace;
};

/// Core solver on the unscaled problem with an arbitrary symmetric weight
/// matrix rho (entries may be +inf to force exact zeros).
inline WeightedResult solve_weighted(const Matrix& s, const Matrix& rho, const SolverConfig& cfg,
                                     const Matrix* warm) {
  const Index p = s.rows();
  WeightedResult res;
  Vector diag_target(p);
  for (Index j = 0; j < p; ++j) {
    diag_target(j) = s(j, j) + (std::isinf(rho(j, j)) ? 0.0 : rho(j, j));
    if (!(diag_target(j) > 0.0)) throw NumericalError("zero variance coordinate; ridge required");
  }

  if (warm && warm->rows() == p && is_pd(*warm)) {
    res.omega = symmetrized(*warm);
    for (Index j = 0; j < p; ++j)
      for (Index i = 0; i < p; ++i)
        if (i != j && std::isinf(rho(i, j))) res.omega(i, j) = 0.0;
    if (!is_pd(res.omega)) res.omega = diag_target.cwiseInverse().asDiagonal();
  } else {
    res.omega = diag_target.cwiseInverse().asDiagonal();
  }

  if (p == 1) {
    res.omega(0, 0) = 1.0 / diag_target(0);
    res.w = diag_target.asDiagonal();
    res.converged = true;
    res.trace.push_back(weighted_objective(res.omega, s, rho));
    return res;
  }

  Matrix a(p - 1, p - 1);
  Vector omega12(p - 1), s12(p - 1), rho12(p - 1), grad(p - 1), u(p - 1);
  std::vector<Index> others(static_cast<std::size_t>(p - 1));

  res.w = spd_inverse(res.omega);
  res.trace.push_back(weighted_objective(res.omega, s, rho));

  for (int iter = 1; iter <= cfg.max_outer_iters; ++iter) {
    double max_change = 0.0;
    for (Index j = 0; j < p; ++j) {
      for (Index k = 0, m = 0; k < p; ++k)
        if (k != j) others[static_cast<std::size_t>(m++)] = k;

      // Omega_11^{-1} = W_11 - w_12 w_12' / w_22
      const double w22 = res.w(j, j);
      for (Index b = 0; b < p - 1; ++b) {
        const Index kb = others[static_cast<std::size_t>(b)];
        s12(b) = s(kb, j);
        rho12(b) = rho(kb, j);
        omega12(b) = res.omega(kb, j);
        for (Index c = 0; c < p - 1; ++c) {
          const Index kc = others[static_cast<std::size_t>(c)];
          a(c, b) = res.w(kc, kb) - res.w(kc, j) * res.w(kb, j) / w22;
        }
      }
      const double cj = diag_target(j);

      // lasso: min 1/2 cj w'Aw + s12'w + sum rho12 |w|
      grad.noalias() = cj * (a * omega12);
      const double scale = std::max(1.0, omega12.cwiseAbs().maxCoeff());
      for (int sweep = 0; sweep < 100000; ++sweep) {
        double delta = 0.0;
        for (Index b = 0; b < p - 1; ++b) {
          const double akk = cj * a(b, b);
          const double partial = grad(b) - akk * omega12(b);
          const double next = -soft_threshold(s12(b) + partial, rho12(b)) / akk;
          const double diff = next - omega12(b);
          if (diff != 0.0) {
            grad.noalias() += (cj * diff) * a.col(b);
            omega12(b) = next;
            delta = std::max(delta, std::abs(diff) * std::sqrt(akk));
          }
        }
        if (delta <= cfg.inner_lasso_tol * scale) break;
      }

      u.noalias() = a * omega12;
      const double new_diag = 1.0 / cj + omega12.dot(u);
      max_change = std::max(max_change, std::abs(new_diag - res.omega(j, j)));
      res.omega(j, j) = new_diag;
      for (Index b = 0; b < p - 1; ++b) {
        const Index kb = others[static_cast<std::size_t>(b)];
        max_change = std::max(max_change, std::abs(omega12(b) - res.omega(kb, j)));
        res.omega(kb, j) = omega12(b);
        res.omega(j, kb) = omega12(b);
      }
      // W after the column update: w22 = cj, w12 = -cj u, W11 = A + cj u u'
      res.w(j, j) = cj;
      for (Index b = 0; b < p - 1; ++b) {
        const Index kb = others[static_cast<std::size_t>(b)];
        res.w(kb, j) = -cj * u(b);
        res.w(j, kb) = -cj * u(b);
        for (Index c = 0; c < p - 1; ++c)
          res.w(others[static_cast<std::size_t>(c)], kb) = a(c, b) + cj * u(c) * u(b);
      }
    }

    res.iterations = iter;
    res.w = spd_inverse(res.omega);
    res.trace.push_back(weighted_objective(res.omega, s, rho));
    const double rel_change = max_change / std::max(1.0, res.omega.cwiseAbs().maxCoeff());
    if (rel_change <= cfg.convergence_tol) {
      res.kkt = weighted_kkt(res.omega, res.w, s, rho);
      if (res.kkt <= cfg.kkt_tol) {
        res.converged = true;
        return res;
      }
    }
  }
  res.kkt = weighted_kkt(res.omega, res.w, s, rho);
  res.converged = res.kkt <= cfg.kkt_tol;
  return res;
}

inline double default_ridge(const Matrix& s) {
  return 1e-4 * s.trace() / static_cast<double>(s.rows());
}

/// S, plus a ridge when S is singular and the penalty leaves entries free.
inline Matrix prepared_covariance(const Matrix& s, const PenaltySpec& pen, const SolverConfig& cfg,
                                  double& ridge) {
  ridge = 0.0;
  const Index p = s.rows();
  const bool fully_penalized =
      pen.penalize_diagonal && static_cast<Index>(pen.penalized_block.size()) == p;
  if (fully_penalized) return s;
  Eigen::LLT<Matrix> llt(s);
  bool singular = llt.info() != Eigen::Success;
  if (!singular) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
    singular = es.eigenvalues()(0) <= 1e-12 * std::max(1.0, es.eigenvalues()(p - 1));
  }
  if (!singular) return s;
  ridge = cfg.ridge_fallback.value_or(default_ridge(s));
  if (!(ridge > 0.0)) throw DomainError("singular covariance with unpenalized entries needs a ridge");
  return s + ridge * Matrix::Identity(p, p);
}

}  // namespace detail

/// Value of the scaled objective for a given Omega.
inline double glasso_objective(const Matrix& omega, const Matrix& s, const PenaltySpec& pen) {
  const Matrix mask = penalty_mask(pen, s.rows());
  return 0.5 * detail::weighted_objective(omega, s, 2.0 * pen.lambda * mask);
}

/// Largest stationarity violation, in units of W - S with W = Omega^{-1}:
/// W - S = 2 lambda * sign(Omega) on penalized nonzeros, |W - S| <= 2 lambda
/// on penalized zeros, W - S = 0 elsewhere.
inline double kkt_residual(const Matrix& omega, const Matrix& s, const PenaltySpec& pen) {
  Eigen::LLT<Matrix> llt(omega);
  if (llt.info() != Eigen::Success) throw NumericalError("omega is singular or indefinite");
  const Matrix w = spd_inverse(omega);
  return detail::weighted_kkt(omega, w, s, 2.0 * pen.lambda * penalty_mask(pen, s.rows()));
}

namespace detail {

/// Coordinates outside the penalized block.
inline std::vector<Index> free_coordinates(const PenaltySpec& pen, Index dim) {
  std::vector<char> in_block(static_cast<std::size_t>(dim), 0);
  for (Index k : pen.penalized_block) in_block[static_cast<std::size_t>(k)] = 1;
  std::vector<Index> out;
  for (Index k = 0; k < dim; ++k)
    if (!in_block[static_cast<std::size_t>(k)]) out.push_back(k);
  return out;
}

/// Solves the penalized block on the Schur complement and fills in the free
/// rows and columns in closed form. `rho_block` is the weight matrix of the
/// reduced problem.
inline WeightedResult solve_reduced(const Matrix& s, const std::vector<Index>& block,
                                    const std::vector<Index>& free, const Matrix& rho_block,
                                    const SolverConfig& cfg, const Matrix* warm) {
  const Matrix s_pp = submatrix(s, block, block);
  const Matrix s_pf = submatrix(s, block, free);
  const Matrix s_ff = submatrix(s, free, free);
  Eigen::LLT<Matrix> llt_ff(s_ff);
  if (llt_ff.info() != Eigen::Success) throw NumericalError("free block of S is singular");
  const Matrix coef = llt_ff.solve(s_pf.transpose());  // S_FF^{-1} S_FP
  const Matrix s_red = symmetrized(s_pp - s_pf * coef);

  Matrix warm_block;
  const Matrix* warm_red = nullptr;
  if (warm && warm->rows() == s.rows()) {
    warm_block = submatrix(*warm, block, block);
    warm_red = &warm_block;
  }
  WeightedResult red = solve_weighted(s_red, rho_block, cfg, warm_red);

  const Matrix s_ff_inv = spd_inverse(s_ff);
  const Matrix omega_pf = -red.omega * coef.transpose();
  const Matrix omega_ff = symmetrized(coef * red.omega * coef.transpose() + s_ff_inv);

  WeightedResult out;
  const Index p = s.rows();
  out.omega.resize(p, p);
  for (std::size_t a = 0; a < block.size(); ++a) {
    for (std::size_t b = 0; b < block.size(); ++b)
      out.omega(block[a], block[b]) = red.omega(static_cast<Index>(a), static_cast<Index>(b));
    for (std::size_t f = 0; f < free.size(); ++f) {
      out.omega(block[a], free[f]) = omega_pf(static_cast<Index>(a), static_cast<Index>(f));
      out.omega(free[f], block[a]) = omega_pf(static_cast<Index>(a), static_cast<Index>(f));
    }
  }
  for (std::size_t f = 0; f < free.size(); ++f)
    for (std::size_t g = 0; g < free.size(); ++g)
      out.omega(free[f], free[g]) = omega_ff(static_cast<Index>(f), static_cast<Index>(g));
  out.w = spd_inverse(out.omega);
  out.iterations = red.iterations;
  // full objective = reduced objective + log det S_FF + |F|
  const double offset = log_det_spd(s_ff) + static_cast<double>(free.size());
  out.trace.reserve(red.trace.size());
  for (double v : red.trace) out.trace.push_back(v + offset);
  return out;
}

}  // namespace detail

inline PrecisionEstimate glasso_masked(const Matrix& s, const PenaltySpec& pen,
                                       const SolverConfig& cfg = {},
                                       const Matrix* warm_start = nullptr) {
  validate_config(cfg);
  if (s.rows() != s.cols() || s.rows() == 0) throw DomainError("S must be square and nonempty");
  if (!s.allFinite()) throw DomainError("S has non-finite entries");
  if (!is_symmetric(s, 1e-10 * std::max(1.0, s.cwiseAbs().maxCoeff())))
    throw DomainError("S is not symmetric");
  if (!is_psd(s)) throw DomainError("S is not positive semidefinite");
  const Index p = s.rows();
  const Matrix mask = penalty_mask(pen, p);

  PrecisionEstimate est;
  est.lambda = pen.lambda;
  const Matrix s_used = detail::prepared_covariance(symmetrized(s), pen, cfg, est.ridge_applied);
  const Matrix rho = 2.0 * pen.lambda * mask;
  const std::vector<Index> free = detail::free_coordinates(pen, p);

  detail::WeightedResult res;
  if (cfg.route == GlassoRoute::automatic && !free.empty()) {
    const Matrix rho_block = submatrix(rho, pen.penalized_block, pen.penalized_block);
    res = detail::solve_reduced(s_used, pen.penalized_block, free, rho_block, cfg, warm_start);
  } else {
    res = detail::solve_weighted(s_used, rho, cfg, warm_start);
  }
  res.kkt = detail::weighted_kkt(res.omega, res.w, s_used, rho);
  res.converged = res.kkt <= cfg.kkt_tol;

  est.omega = std::move(res.omega);
  est.iterations = res.iterations;
  est.converged = res.converged;
  est.kkt_residual = res.kkt;
  est.objective = 0.5 * detail::weighted_objective(est.omega, s_used, rho);
  est.objective_trace.reserve(res.trace.size());
  for (double v : res.trace) est.objective_trace.push_back(0.5 * v);
  return est;
}

/// Smallest lambda for which every penalized off-diagonal entry is zero.
inline double lambda_max(const Matrix& s, const std::vector<Index>& penalized_block,
                         const SolverConfig& cfg = {}) {
  const Index p = s.rows();
  PenaltySpec pen{0.0, penalized_block, false};
  const Matrix mask = penalty_mask(pen, p);
  double ridge = 0.0;
  const Matrix s_used = detail::prepared_covariance(symmetrized(s), pen, cfg, ridge);
  const std::vector<Index> free = detail::free_coordinates(pen, p);
  double worst = 0.0;
  if (cfg.route == GlassoRoute::automatic && !free.empty()) {
    // the reduced problem starts from a diagonal solution, so only S_red matters
    const Matrix s_pf = submatrix(s_used, penalized_block, free);
    const Matrix s_ff = submatrix(s_used, free, free);
    const Matrix s_red = submatrix(s_used, penalized_block, penalized_block) - s_pf * s_ff.llt().solve(s_pf.transpose());
    for (Index j = 0; j < s_red.cols(); ++j)
      for (Index i = 0; i < s_red.rows(); ++i)
        if (i != j) worst = std::max(worst, std::abs(s_red(i, j)));
    return 0.5 * worst;
  }
  Matrix rho = Matrix::Zero(p, p);
  for (Index j = 0; j < p; ++j)
    for (Index i = 0; i < p; ++i)
      if (mask(i, j) != 0.0) rho(i, j) = std::numeric_limits<double>::infinity();
  const auto res = detail::solve_weighted(s_used, rho, cfg, nullptr);
  for (Index j = 0; j < p; ++j)
    for (Index i = 0; i < p; ++i)
      if (mask(i, j) != 0.0) worst = std::max(worst, std::abs(res.w(i, j) - s_used(i, j)));
  return 0.5 * worst;
}

/// `count` log-spaced values from `top` down to `min_ratio * top`.
inline std::vector<double> log_spaced_lambdas(double top, std::size_t count, double min_ratio = 0.01) {
  if (count == 0) throw DomainError("lambda count must be positive");
  if (!(top > 0.0)) throw DomainError("lambda_max must be positive");
  if (!(min_ratio > 0.0 && min_ratio < 1.0)) throw DomainError("lambda ratio must lie in (0,1)");
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = top;
    return out;
  }
  const double step = std::log(min_ratio) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) out[i] = top * std::exp(step * static_cast<double>(i));
  out.front() = top;
  return out;
}

/// ALR data with the identity of each coordinate.
struct AlrDataset {
  Matrix z;  ///< n x (K+1)
  TaxonId reference = 0;
  TaxonList layout;
  TaxonList candidates;

  /// Slots whose taxon is not a candidate reference.
  std::vector<Index> invariant_block() const {
    std::vector<Index> out;
    for (std::size_t j = 0; j < layout.size(); ++j)
      if (std::find(candidates.begin(), candidates.end(), layout[j]) == candidates.end())
        out.push_back(static_cast<Index>(j));
    return out;
  }
};

inline Vector column_mean(const Matrix& z) { return z.colwise().mean().transpose(); }

/// Covariance about `mu` with 1/n normalization.
inline Matrix scatter_about(const Matrix& z, const Vector& mu) {
  const Matrix centered = z.rowwise() - mu.transpose();
  return symmetrized((centered.transpose() * centered) / static_cast<double>(z.rows()));
}

inline RegularizationPath inv_glasso_path(const Matrix& z, const std::vector<Index>& penalized_block,
                                          const std::vector<double>& lambdas,
                                          const SolverConfig& cfg = {},
                                          bool penalize_diagonal = false) {
  if (z.rows() < 2) throw DomainError("need at least two samples");
  validate_lambdas(lambdas);
  const Matrix s = scatter_about(z, column_mean(z));
  RegularizationPath path;
  path.lambdas = lambdas;
  path.estimates.reserve(lambdas.size());
  const Matrix* warm = nullptr;
  for (double lam : lambdas) {
    PenaltySpec pen{lam, penalized_block, penalize_diagonal};
    path.estimates.push_back(glasso_masked(s, pen, cfg, warm));
    warm = &path.estimates.back().omega;
  }
  return path;
}

inline RegularizationPath inv_glasso_path(const AlrDataset& data, const std::vector<double>& lambdas,
                                          const SolverConfig& cfg = {}) {
  auto path = inv_glasso_path(data.z, data.invariant_block(), lambdas, cfg);
  for (auto& e : path.estimates) e.reference_index = data.reference;
  return path;
}

}  // namespace alrnet
