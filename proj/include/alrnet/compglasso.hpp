#pragma once

// Reference-invariant compositional graphical lasso.
//
// Counts x_i ~ Multinomial(M_i, p_i), z_i = alr(p_i) ~ N(mu, Omega^{-1}). The
// fit minimizes
//
//   -1/n sum_i [x_i' z_i - M_i log(1 + 1' exp(z_i))]
//   - 1/2 log det Omega + 1/(2n) sum_i (z_i - mu)' Omega (z_i - mu)
//   + lambda |Omega restricted to the non-candidate block|_1
//
// by cycling over z (per-sample Newton), mu (sample mean) and Omega (masked
// graphical lasso). The multinomial coefficient is constant and left out, so
// objective values are only comparable with other values from this library.

#include "alrnet/common.hpp"
#include "alrnet/glasso.hpp"
#include "alrnet/transforms.hpp"

#include <numeric>
#include <string>
#include <thread>

namespace alrnet {

struct CountMatrix {
  CountArray counts;  ///< n x (K+2)
  std::vector<std::string> taxon_ids;

  Index samples() const { return counts.rows(); }
  std::size_t num_taxa() const { return static_cast<std::size_t>(counts.cols()); }

  Vector depths() const {
    Vector m(counts.rows());
    for (Index i = 0; i < counts.rows(); ++i) m(i) = static_cast<double>(counts.row(i).sum());
    return m;
  }
};

inline void validate_counts(const CountMatrix& x) {
  if (x.counts.rows() < 1 || x.counts.cols() < 2) throw DomainError("count matrix too small");
  if (!x.taxon_ids.empty() && x.taxon_ids.size() != x.num_taxa())
    throw DomainError("taxon id count does not match columns");
  if ((x.counts.array() < 0).any()) throw DomainError("negative counts");
  for (Index i = 0; i < x.counts.rows(); ++i)
    if (x.counts.row(i).sum() <= 0) throw DomainError("sample with zero depth");
}

/// Non-reference counts in layout order, as doubles.
inline Matrix layout_counts(const CountMatrix& x, const TaxonList& layout) {
  Matrix out(x.counts.rows(), static_cast<Index>(layout.size()));
  for (std::size_t j = 0; j < layout.size(); ++j)
    out.col(static_cast<Index>(j)) = x.counts.col(static_cast<Index>(layout[j])).cast<double>();
  return out;
}

struct LatentState {
  Matrix z;
  Vector mu;
  Matrix omega;
  TaxonId reference = 0;
  TaxonList layout;
  TaxonList candidates;

  std::vector<Index> invariant_block() const {
    return AlrDataset{Matrix(), reference, layout, candidates}.invariant_block();
  }
};

struct NewtonConfig {
  double grad_tol = 1e-8;  ///< infinity norm
  int max_iters = 50;
  int max_halvings = 30;
};

struct FitConfig {
  SolverConfig glasso;
  NewtonConfig newton;
  int max_outer_iters = 100;
  double objective_rel_tol = 1e-6;
  double omega_rel_tol = 1e-4;
  double pseudocount = 0.5;
  /// Absolute slack for counting an objective increase as a violation.
  double descent_tol = 1e-8;
  /// Threads used for the per-sample z updates.
  int workers = 1;
};

struct FitDiagnostics {
  int outer_iterations = 0;
  std::vector<double> objective_trace;
  double newton_iters_mean = 0.0;
  int newton_iters_max = 0;
  int newton_fallbacks = 0;
  int newton_unconverged = 0;
  /// Sub-steps whose objective rose by more than descent_tol.
  int descent_violations = 0;
  bool converged = false;
};

struct FitResult {
  LatentState state;
  FitDiagnostics diagnostics;
  double objective = 0.0;
};

// ---------------------------------------------------------------------------
// objective

inline double multinomial_term(const Matrix& x_layout, const Vector& depths, const Matrix& z) {
  double acc = 0.0;
  for (Index i = 0; i < z.rows(); ++i) {
    const Vector zi = z.row(i).transpose();
    acc += x_layout.row(i).dot(z.row(i)) - depths(i) * log1p_sum_exp(zi);
  }
  return -acc / static_cast<double>(z.rows());
}

inline double latent_objective(const Matrix& x_layout, const Vector& depths, const Matrix& z,
                               const Vector& mu, const Matrix& omega, const PenaltySpec& pen) {
  if (x_layout.rows() != z.rows() || x_layout.cols() != z.cols() || depths.size() != z.rows() ||
      mu.size() != z.cols() || omega.rows() != z.cols() || omega.cols() != z.cols())
    throw DomainError("objective dimension mismatch");
  return multinomial_term(x_layout, depths, z) + glasso_objective(omega, scatter_about(z, mu), pen);
}

inline double objective(const CountMatrix& x, const LatentState& state, const PenaltySpec& pen) {
  if (state.layout.size() + 1 != x.num_taxa()) throw DomainError("state layout does not match counts");
  return latent_objective(layout_counts(x, state.layout), x.depths(), state.z, state.mu, state.omega, pen);
}

// ---------------------------------------------------------------------------
// z update

/// f(z) = x'z - M log(1 + 1'exp z) - 1/2 (z-mu)' Omega (z-mu), to be maximized.
inline double sample_objective(const Vector& x, double depth, const Vector& z, const Vector& mu,
                               const Matrix& omega) {
  const Vector d = z - mu;
  return x.dot(z) - depth * log1p_sum_exp(z) - 0.5 * d.dot(omega * d);
}

/// exp(z_j) / (1 + 1'exp z)
inline Vector softmax_share(const Vector& z) {
  const double shift = std::max(0.0, z.maxCoeff());
  Vector e = (z.array() - shift).exp().matrix();
  const double denom = std::exp(-shift) + e.sum();
  return e / denom;
}

inline Vector sample_gradient(const Vector& x, double depth, const Vector& z, const Vector& mu,
                              const Matrix& omega) {
  return x - depth * softmax_share(z) - omega * (z - mu);
}

inline Matrix sample_hessian(double depth, const Vector& z, const Matrix& omega) {
  const Vector q = softmax_share(z);
  Matrix h = -depth * (Matrix(q.asDiagonal()) - q * q.transpose());
  h -= omega;
  return h;
}

struct NewtonResult {
  Vector z;
  int iterations = 0;
  bool converged = false;
  bool used_fallback = false;
  double grad_norm = 0.0;
};

inline NewtonResult update_z(const Vector& x, double depth, const Vector& z_init, const Vector& mu,
                             const Matrix& omega, const NewtonConfig& cfg = {}) {
  NewtonResult res{z_init};
  double f = sample_objective(x, depth, res.z, mu, omega);
  Vector g = sample_gradient(x, depth, res.z, mu, omega);
  res.grad_norm = g.cwiseAbs().maxCoeff();
  while (res.grad_norm > cfg.grad_tol && res.iterations < cfg.max_iters) {
    ++res.iterations;
    const Matrix neg_h = -sample_hessian(depth, res.z, omega);
    Eigen::LLT<Matrix> llt(neg_h);
    Vector step;
    if (llt.info() == Eigen::Success) {
      step = llt.solve(g);
    } else {
      res.used_fallback = true;
      step = g / std::max(1.0, neg_h.diagonal().maxCoeff());
    }
    const double slope = g.dot(step);
    // f is a difference of terms that can dwarf it; its rounding error scales with them
    const double magnitude = std::abs(x.dot(res.z)) + depth * log1p_sum_exp(res.z);
    const double noise = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f) + magnitude);
    double t = 1.0;
    bool accepted = false;
    Vector trial;
    double f_trial = f;
    for (int h = 0; h <= cfg.max_halvings; ++h, t *= 0.5) {
      trial = res.z + t * step;
      f_trial = sample_objective(x, depth, trial, mu, omega);
      if (!std::isfinite(f_trial)) continue;
      if (f_trial >= f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      // near the optimum f stops resolving the step; fall back on the gradient
      if (std::abs(f_trial - f) <= noise &&
          sample_gradient(x, depth, trial, mu, omega).cwiseAbs().maxCoeff() < res.grad_norm) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // no sufficient increase left at working precision
      if (f_trial > f) {
        res.z = trial;
        f = f_trial;
        g = sample_gradient(x, depth, res.z, mu, omega);
        res.grad_norm = g.cwiseAbs().maxCoeff();
      }
      break;
    }
    res.z = std::move(trial);
    f = f_trial;
    g = sample_gradient(x, depth, res.z, mu, omega);
    res.grad_norm = g.cwiseAbs().maxCoeff();
  }
  res.converged = res.grad_norm <= cfg.grad_tol;
  return res;
}

inline Vector update_mu(const Matrix& z) {
  if (z.rows() < 1) throw DomainError("update_mu needs at least one sample");
  return column_mean(z);
}

inline PrecisionEstimate update_omega(const Matrix& z, const Vector& mu, const PenaltySpec& pen,
                                      const SolverConfig& cfg = {}, const Matrix* warm = nullptr) {
  return glasso_masked(scatter_about(z, mu), pen, cfg, warm);
}

// ---------------------------------------------------------------------------
// fitting

/// ALR of the empirical proportions, zero counts replaced by `pseudocount`.
inline Matrix initial_alr(const CountMatrix& x, TaxonId reference, const TaxonList& layout,
                          double pseudocount) {
  validate_layout(x.num_taxa(), reference, layout);
  Matrix z(x.counts.rows(), static_cast<Index>(layout.size()));
  auto adj = [&](Index i, TaxonId t) {
    const auto c = x.counts(i, static_cast<Index>(t));
    return c == 0 ? pseudocount : static_cast<double>(c);
  };
  for (Index i = 0; i < z.rows(); ++i) {
    const double log_ref = std::log(adj(i, reference));
    for (std::size_t j = 0; j < layout.size(); ++j)
      z(i, static_cast<Index>(j)) = std::log(adj(i, layout[j])) - log_ref;
  }
  return z;
}

namespace detail {

struct NewtonSweepStats {
  long long total_iters = 0;
  int max_iters = 0;
  int fallbacks = 0;
  int unconverged = 0;
};

inline void z_sweep(const Matrix& x_layout, const Vector& depths, Matrix& z, const Vector& mu,
                    const Matrix& omega, const NewtonConfig& cfg, int workers, NewtonSweepStats& stats) {
  const Index n = z.rows();
  std::vector<NewtonResult> results(static_cast<std::size_t>(n));
  auto work = [&](Index begin, Index end) {
    for (Index i = begin; i < end; ++i)
      results[static_cast<std::size_t>(i)] =
          update_z(x_layout.row(i).transpose(), depths(i), z.row(i).transpose(), mu, omega, cfg);
  };
  if (workers <= 1 || n < 2) {
    work(0, n);
  } else {
    const Index chunks = std::min<Index>(workers, n);
    std::vector<std::jthread> pool;
    for (Index c = 0; c < chunks; ++c) pool.emplace_back(work, c * n / chunks, (c + 1) * n / chunks);
  }
  for (Index i = 0; i < n; ++i) {
    const auto& r = results[static_cast<std::size_t>(i)];
    z.row(i) = r.z.transpose();
    stats.total_iters += r.iterations;
    stats.max_iters = std::max(stats.max_iters, r.iterations);
    stats.fallbacks += r.used_fallback ? 1 : 0;
    stats.unconverged += r.converged ? 0 : 1;
  }
}

}  // namespace detail

/// Block coordinate descent from a given state at a fixed penalty.
inline FitResult fit_from_state(const CountMatrix& x, LatentState state, double lambda,
                                const FitConfig& cfg = {}) {
  validate_counts(x);
  const Matrix xl = layout_counts(x, state.layout);
  const Vector depths = x.depths();
  const PenaltySpec pen{lambda, state.invariant_block(), false};
  if (pen.penalized_block.empty()) throw DomainError("every coordinate is a candidate reference");

  FitResult out;
  auto& diag = out.diagnostics;
  double obj = latent_objective(xl, depths, state.z, state.mu, state.omega, pen);
  diag.objective_trace.push_back(obj);
  detail::NewtonSweepStats stats;

  auto track = [&](double next) {
    if (next > obj + cfg.descent_tol) ++diag.descent_violations;
    obj = next;
  };

  for (int iter = 1; iter <= cfg.max_outer_iters; ++iter) {
    const double obj_start = obj;
    const Matrix omega_prev = state.omega;

    detail::z_sweep(xl, depths, state.z, state.mu, state.omega, cfg.newton, cfg.workers, stats);
    track(latent_objective(xl, depths, state.z, state.mu, state.omega, pen));

    state.mu = update_mu(state.z);
    track(latent_objective(xl, depths, state.z, state.mu, state.omega, pen));

    auto est = update_omega(state.z, state.mu, pen, cfg.glasso, &state.omega);
    state.omega = std::move(est.omega);
    track(latent_objective(xl, depths, state.z, state.mu, state.omega, pen));

    diag.objective_trace.push_back(obj);
    diag.outer_iterations = iter;
    const double obj_change = std::abs(obj_start - obj) / std::max(1.0, std::abs(obj));
    const double omega_change = (state.omega - omega_prev).norm() / std::max(1e-300, omega_prev.norm());
    if (obj_change < cfg.objective_rel_tol && omega_change < cfg.omega_rel_tol) {
      diag.converged = true;
      break;
    }
  }
  const double sweeps = static_cast<double>(diag.outer_iterations) * static_cast<double>(x.samples());
  diag.newton_iters_mean = sweeps > 0 ? static_cast<double>(stats.total_iters) / sweeps : 0.0;
  diag.newton_iters_max = stats.max_iters;
  diag.newton_fallbacks = stats.fallbacks;
  diag.newton_unconverged = stats.unconverged;
  out.objective = obj;
  out.state = std::move(state);
  return out;
}

/// Starting state: empirical ALR, its mean, and the masked graphical lasso
/// estimate on it at `lambda`.
inline LatentState initial_state(const CountMatrix& x, TaxonId reference, const TaxonList& candidates,
                                 double lambda, const FitConfig& cfg = {}) {
  validate_counts(x);
  LatentState st;
  st.reference = reference;
  st.candidates = candidates;
  st.layout = canonical_layout(x.num_taxa(), candidates, reference);
  st.z = initial_alr(x, reference, st.layout, cfg.pseudocount);
  st.mu = update_mu(st.z);
  const PenaltySpec pen{lambda, st.invariant_block(), false};
  st.omega = update_omega(st.z, st.mu, pen, cfg.glasso).omega;
  return st;
}

inline FitResult fit(const CountMatrix& x, TaxonId reference, const TaxonList& candidates, double lambda,
                     const FitConfig& cfg = {}) {
  return fit_from_state(x, initial_state(x, reference, candidates, lambda, cfg), lambda, cfg);
}

struct CompPath {
  RegularizationPath path;
  std::vector<FitDiagnostics> diagnostics;
  LatentState final_state;
};

/// Warm-started path: each lambda starts from the previous lambda's solution.
inline CompPath fit_path(const CountMatrix& x, TaxonId reference, const TaxonList& candidates,
                         const std::vector<double>& lambdas, const FitConfig& cfg = {}) {
  validate_lambdas(lambdas);
  CompPath out;
  out.path.lambdas = lambdas;
  LatentState state = initial_state(x, reference, candidates, lambdas.front(), cfg);
  for (double lam : lambdas) {
    FitResult r = fit_from_state(x, std::move(state), lam, cfg);
    PrecisionEstimate est;
    est.omega = r.state.omega;
    est.lambda = lam;
    est.reference_index = reference;
    est.iterations = r.diagnostics.outer_iterations;
    est.converged = r.diagnostics.converged;
    est.objective = r.objective;
    out.path.estimates.push_back(std::move(est));
    out.diagnostics.push_back(std::move(r.diagnostics));
    state = std::move(r.state);
  }
  out.final_state = std::move(state);
  return out;
}

/// Inv-gLASSO on the empirical ALR of the counts (no latent step).
inline RegularizationPath empirical_glasso_path(const CountMatrix& x, TaxonId reference,
                                                const TaxonList& candidates,
                                                const std::vector<double>& lambdas,
                                                const FitConfig& cfg = {}) {
  validate_counts(x);
  AlrDataset data;
  data.reference = reference;
  data.candidates = candidates;
  data.layout = canonical_layout(x.num_taxa(), candidates, reference);
  data.z = initial_alr(x, reference, data.layout, cfg.pseudocount);
  return inv_glasso_path(data, lambdas, cfg.glasso);
}

/// lambda_max of the empirical ALR data. The value does not depend on which
/// candidate is the reference, but rounding does, so it is always computed
/// under the first candidate: every reference in the set then gets the same
/// grid to the last bit.
inline double empirical_lambda_max(const CountMatrix& x, const TaxonList& candidates, const FitConfig& cfg = {}) {
  if (candidates.empty()) throw LayoutError("empty candidate set");
  const TaxonId reference = *std::min_element(candidates.begin(), candidates.end());
  const TaxonList layout = canonical_layout(x.num_taxa(), candidates, reference);
  const Matrix z = initial_alr(x, reference, layout, cfg.pseudocount);
  const AlrDataset d{Matrix(), reference, layout, candidates};
  return lambda_max(scatter_about(z, column_mean(z)), d.invariant_block(), cfg.glasso);
}

}  // namespace alrnet
