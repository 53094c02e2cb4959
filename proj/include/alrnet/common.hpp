#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace alrnet {

using Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CountArray = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Zero-based taxon index into a count table row.
using TaxonId = std::size_t;
using TaxonList = std::vector<TaxonId>;

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};
struct LayoutError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = j + 1; i < m.rows(); ++i)
      if (std::abs(m(i, j) - m(j, i)) > tol) return false;
  return true;
}

/// Accepts roundoff-level negative eigenvalues: smallest > -1e-10 * largest.
inline bool is_psd(const Matrix& m) {
  if (m.rows() == 0) return true;
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) return false;
  const double lo = es.eigenvalues()(0);
  const double hi = es.eigenvalues()(m.rows() - 1);
  return lo > -1e-10 * std::max(hi, 0.0);
}

/// Strictly positive definite: Cholesky succeeds and smallest eigenvalue > 0.
inline bool is_pd(const Matrix& m) {
  if (m.rows() == 0) return false;
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0) > 0.0;
}

inline double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

/// Inverse of a symmetric PD matrix via Cholesky.
inline Matrix spd_inverse(const Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw NumericalError("matrix is not positive definite");
  Matrix inv = llt.solve(Matrix::Identity(m.rows(), m.cols()));
  return 0.5 * (inv + inv.transpose());
}

inline double log_det_spd(const Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw NumericalError("log-determinant of a non-PD matrix");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

inline Matrix submatrix(const Matrix& m, const std::vector<Index>& rows,
                        const std::vector<Index>& cols) {
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      out(static_cast<Index>(i), static_cast<Index>(j)) = m(rows[i], cols[j]);
  return out;
}

inline std::vector<Index> leading_indices(Index count) {
  std::vector<Index> idx(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = i;
  return idx;
}

/// log(1 + sum(exp(z))) without overflow.
inline double log1p_sum_exp(const Vector& z) {
  const double m = std::max(0.0, z.size() ? z.maxCoeff() : 0.0);
  double acc = std::exp(-m);
  for (Index j = 0; j < z.size(); ++j) acc += std::exp(z(j) - m);
  return m + std::log(acc);
}

}  // namespace alrnet
