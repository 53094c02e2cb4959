#pragma once

#include "alrnet/compglasso.hpp"

#include <random>

namespace alrnet::testing {

inline Matrix random_normal(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  return m;
}

/// Wishart-like SPD matrix with a floor on the spectrum.
inline Matrix random_spd(Index dim, std::mt19937_64& rng, double floor = 0.1) {
  const Matrix a = random_normal(dim, dim + 2, rng);
  Matrix s = a * a.transpose() / static_cast<double>(dim + 2);
  s.diagonal().array() += floor;
  return 0.5 * (s + s.transpose());
}

inline Vector random_vector(Index n, std::mt19937_64& rng, double scale = 1.0) {
  return scale * random_normal(n, 1, rng).col(0);
}

inline double rel_diff(const Matrix& a, const Matrix& b) {
  const double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  return scale > 0.0 ? (a - b).cwiseAbs().maxCoeff() / scale : 0.0;
}

/// Proximal gradient on the scaled objective, kept inside the PD cone by
/// backtracking. Slow but independent of the solver under test.
inline Matrix ista(const Matrix& s, const PenaltySpec& pen, int iters) {
  const Index p = s.rows();
  const Matrix mask = penalty_mask(pen, p);
  Matrix omega = Matrix(Vector((s.diagonal().array() + 0.1).inverse()).asDiagonal());
  double f = glasso_objective(omega, s, pen);
  double t = 1.0;
  for (int it = 0; it < iters; ++it) {
    const Matrix grad = 0.5 * (s - spd_inverse(omega));
    for (int bt = 0; bt < 60; ++bt) {
      Matrix next = omega - t * grad;
      for (Index j = 0; j < p; ++j)
        for (Index i = 0; i < p; ++i)
          if (mask(i, j) != 0.0) next(i, j) = detail::soft_threshold(next(i, j), t * pen.lambda);
      next = symmetrized(next);
      if (is_pd(next)) {
        const Matrix step = next - omega;
        const double fn = glasso_objective(next, s, pen);
        // majorization test on the smooth part, plus the penalty
        const double smooth_old = f - pen.lambda * (mask.array() * omega.array().abs()).sum();
        const double smooth_new = fn - pen.lambda * (mask.array() * next.array().abs()).sum();
        if (smooth_new <= smooth_old + (grad.array() * step.array()).sum() + step.squaredNorm() / (2 * t) + 1e-15) {
          omega = next;
          f = fn;
          t *= 1.5;
          break;
        }
      }
      t *= 0.5;
    }
  }
  return omega;
}

struct Instance {
  Vector x;
  double depth;
  Vector z, mu;
  Matrix omega;
};

inline Instance random_instance(Index dim, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> cnt(0, 400);
  Instance in;
  in.x.resize(dim);
  for (Index k = 0; k < dim; ++k) in.x(k) = cnt(rng);
  in.depth = in.x.sum() + cnt(rng) + 1;  // reference count on top
  in.z = random_vector(dim, rng);
  in.mu = random_vector(dim, rng);
  in.omega = spd_inverse(random_spd(dim, rng));
  return in;
}

inline CountMatrix random_counts(Index n, Index taxa, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> cnt(0, 300);
  CountMatrix x;
  x.counts.resize(n, taxa);
  for (Index i = 0; i < n; ++i)
    for (Index t = 0; t < taxa; ++t) x.counts(i, t) = cnt(rng) + (t == taxa - 1 ? 1 : 0);
  return x;
}

}  // namespace alrnet::testing
