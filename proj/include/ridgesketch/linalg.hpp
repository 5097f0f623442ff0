// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ridgesketch/errors.hpp"

namespace ridgesketch {

using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CsrMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using IndexList = std::vector<std::size_t>;

template <class M>
concept SystemMatrix = std::same_as<M, DenseMatrix> || std::same_as<M, CsrMatrix>;

// Eigenvalues below rcond * lambda_max are treated as zero by the
// least-norm subsolver.
inline constexpr double kPinvRcond = 1e-10;
inline constexpr double kSymmetryTol = 1e-9;

namespace detail {

inline bool is_power_of_two(std::size_t n) { return n != 0 && std::has_single_bit(n); }

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

inline bool all_finite(const CsrMatrix& m) {
  for (Index k = 0; k < m.nonZeros(); ++k) {
    if (!std::isfinite(m.valuePtr()[k])) return false;
  }
  return true;
}

}  // namespace detail

inline std::size_t rows(const DenseMatrix& m) { return static_cast<std::size_t>(m.rows()); }
inline std::size_t rows(const CsrMatrix& m) { return static_cast<std::size_t>(m.rows()); }
inline std::size_t cols(const DenseMatrix& m) { return static_cast<std::size_t>(m.cols()); }
inline std::size_t cols(const CsrMatrix& m) { return static_cast<std::size_t>(m.cols()); }

/// Max-abs asymmetry relative to the largest entry. Zero for the zero matrix.
template <class Derived>
double asymmetry(const Eigen::MatrixBase<Derived>& m) {
  if (m.rows() != m.cols()) return std::numeric_limits<double>::infinity();
  const double scale = m.cwiseAbs().maxCoeff();
  if (m.size() == 0 || scale == 0.0) return 0.0;
  return (m - m.transpose()).cwiseAbs().maxCoeff() / scale;
}

inline double asymmetry(const CsrMatrix& m) {
  if (m.rows() != m.cols()) return std::numeric_limits<double>::infinity();
  if (m.nonZeros() == 0) return 0.0;
  const double scale = m.coeffs().cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  const CsrMatrix diff = m - CsrMatrix(m.transpose());
  if (diff.nonZeros() == 0) return 0.0;
  return diff.coeffs().cwiseAbs().maxCoeff() / scale;
}

/// Checks the structural CSR invariants: monotone offsets, in-range and
/// strictly increasing column indices per row, finite values.
inline void validate_csr(const CsrMatrix& m) {
  if (!m.isCompressed()) throw InputError("CSR matrix must be in compressed form");
  const int* offsets = m.outerIndexPtr();
  const int* col_idx = m.innerIndexPtr();
  if (offsets[0] != 0 || offsets[m.rows()] != m.nonZeros()) {
    throw InputError("CSR row offsets do not span the stored values");
  }
  for (Index i = 0; i < m.rows(); ++i) {
    if (offsets[i + 1] < offsets[i]) throw InputError("CSR row offsets must be non-decreasing");
    for (int k = offsets[i]; k < offsets[i + 1]; ++k) {
      if (col_idx[k] < 0 || col_idx[k] >= m.cols()) throw InputError("CSR column index out of range");
      if (k > offsets[i] && col_idx[k] <= col_idx[k - 1]) {
        throw InputError("CSR column indices must be strictly increasing within a row");
      }
    }
  }
  if (!detail::all_finite(m)) throw InputError("CSR matrix has non-finite values");
}

struct SymmetricEigen {
  Vector values;           // ascending
  Eigen::MatrixXd vectors;  // orthonormal columns, vectors.col(i) <-> values(i)
};

/// Full symmetric eigendecomposition. Meant for oracle-scale matrices
/// (a few thousand rows at most).
template <class Derived>
SymmetricEigen eig_sym(const Eigen::MatrixBase<Derived>& m) {
  if (m.rows() != m.cols()) throw ContractViolation("eig_sym: matrix is not square");
  if (!detail::all_finite(m)) throw InputError("eig_sym: non-finite input");
  if (asymmetry(m) > kSymmetryTol) throw ContractViolation("eig_sym: matrix is not symmetric");
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw ContractViolation("eig_sym: eigensolver did not converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

/// Minimum-norm least-squares solution of M x = r for symmetric PSD M,
/// i.e. M^+ r, through a symmetric eigendecomposition. Eigenvalues below
/// kPinvRcond * lambda_max are dropped.
template <class Derived, class VecDerived>
Vector least_norm_solution(const Eigen::MatrixBase<Derived>& m, const Eigen::MatrixBase<VecDerived>& r) {
  if (m.rows() < 1 || m.rows() != m.cols()) throw InputError("least_norm_solution: M must be square, tau >= 1");
  if (r.size() != m.rows()) throw InputError("least_norm_solution: right-hand side has wrong length");
  if (!detail::all_finite(m) || !detail::all_finite(r)) throw InputError("least_norm_solution: non-finite input");
  if (asymmetry(m) > kSymmetryTol) throw ContractViolation("least_norm_solution: M is not symmetric");

  if (m.rows() == 1) {
    const double d = m(0, 0);
    Vector out(1);
    out(0) = d > 0.0 ? r(0) / d : 0.0;
    return out;
  }

  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw ContractViolation("least_norm_solution: eigensolver failed");
  const Vector& lambda = solver.eigenvalues();
  const double lambda_max = lambda.maxCoeff();
  Vector out = Vector::Zero(m.rows());
  if (!(lambda_max > 0.0)) return out;
  const double cutoff = kPinvRcond * lambda_max;
  const Eigen::MatrixXd& v = solver.eigenvectors();
  const Vector coeffs = v.transpose() * r;
  for (Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) > cutoff) out.noalias() += (coeffs(i) / lambda(i)) * v.col(i);
  }
  return out;
}

/// In-place unnormalised Walsh-Hadamard transform (Sylvester ordering):
/// v <- H_m v with H_1 = [1], H_2m = [[H, H], [H, -H]].
inline void fwht_inplace(std::span<double> v) {
  const std::size_t n = v.size();
  if (!detail::is_power_of_two(n)) throw InputError("fwht: length must be a power of two");
  for (std::size_t h = 1; h < n; h <<= 1) {
    for (std::size_t i = 0; i < n; i += 2 * h) {
      for (std::size_t j = i; j < i + h; ++j) {
        const double a = v[j];
        const double b = v[j + h];
        v[j] = a + b;
        v[j + h] = a - b;
      }
    }
  }
}

inline Vector fwht(Vector v) {
  fwht_inplace(std::span<double>(v.data(), static_cast<std::size_t>(v.size())));
  return v;
}

/// Applies H_m to every column of a row-major matrix, i.e. M <- H_m M,
/// using whole-row butterflies.
inline void fwht_columns_inplace(DenseMatrix& m) {
  const auto n = static_cast<std::size_t>(m.rows());
  if (!detail::is_power_of_two(n)) throw InputError("fwht: row count must be a power of two");
  for (std::size_t h = 1; h < n; h <<= 1) {
    for (std::size_t i = 0; i < n; i += 2 * h) {
      for (std::size_t j = i; j < i + h; ++j) {
        auto top = m.row(static_cast<Index>(j));
        auto bottom = m.row(static_cast<Index>(j + h));
        for (Index c = 0; c < m.cols(); ++c) {
          const double a = top(c);
          const double b = bottom(c);
          top(c) = a + b;
          bottom(c) = a - b;
        }
      }
    }
  }
}

inline std::size_t next_power_of_two(std::size_t n) { return n <= 1 ? 1 : std::bit_ceil(n); }

namespace detail {

inline void check_indices(std::span<const std::size_t> indices, std::size_t bound) {
  for (std::size_t i : indices) {
    if (i >= bound) throw InputError("select_rows: index " + std::to_string(i) + " out of range");
  }
}

}  // namespace detail

inline DenseMatrix select_rows(const DenseMatrix& m, std::span<const std::size_t> indices) {
  detail::check_indices(indices, rows(m));
  DenseMatrix out(static_cast<Index>(indices.size()), m.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) out.row(static_cast<Index>(k)) = m.row(static_cast<Index>(indices[k]));
  return out;
}

inline CsrMatrix select_rows(const CsrMatrix& m, std::span<const std::size_t> indices) {
  detail::check_indices(indices, rows(m));
  const int* offsets = m.outerIndexPtr();
  std::size_t nnz = 0;
  for (std::size_t i : indices) nnz += static_cast<std::size_t>(offsets[i + 1] - offsets[i]);

  CsrMatrix out(static_cast<Index>(indices.size()), m.cols());
  out.resizeNonZeros(static_cast<Index>(nnz));
  int* out_offsets = out.outerIndexPtr();
  int pos = 0;
  out_offsets[0] = 0;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    for (int p = offsets[i]; p < offsets[i + 1]; ++p, ++pos) {
      out.innerIndexPtr()[pos] = m.innerIndexPtr()[p];
      out.valuePtr()[pos] = m.valuePtr()[p];
    }
    out_offsets[k + 1] = pos;
  }
  return out;
}

inline DenseMatrix to_dense(const CsrMatrix& m) { return DenseMatrix(m); }
inline const DenseMatrix& to_dense(const DenseMatrix& m) { return m; }

/// A_ii for either storage format.
inline Vector diagonal(const DenseMatrix& m) { return m.diagonal(); }
inline Vector diagonal(const CsrMatrix& m) { return m.diagonal(); }

/// out += coef * row(i) of m.
template <class RowOut>
void axpy_row(const DenseMatrix& m, std::size_t i, double coef, RowOut&& out) {
  out.noalias() += coef * m.row(static_cast<Index>(i));
}

template <class RowOut>
void axpy_row(const CsrMatrix& m, std::size_t i, double coef, RowOut&& out) {
  for (CsrMatrix::InnerIterator it(m, static_cast<Index>(i)); it; ++it) out(it.col()) += coef * it.value();
}

/// Dot product of row i of m with x.
inline double row_dot(const DenseMatrix& m, std::size_t i, const Vector& x) {
  return m.row(static_cast<Index>(i)).dot(x);
}

inline double row_dot(const CsrMatrix& m, std::size_t i, const Vector& x) {
  double acc = 0.0;
  for (CsrMatrix::InnerIterator it(m, static_cast<Index>(i)); it; ++it) acc += it.value() * x(it.col());
  return acc;
}

}  // namespace ridgesketch
