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

#include <cmath>
#include <string_view>

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>

#include "ridgesketch/linalg.hpp"

namespace ridgesketch {

enum class Route { primal, dual, kernel };

inline std::string_view to_string(Route r) {
  switch (r) {
    case Route::primal: return "primal";
    case Route::dual: return "dual";
    case Route::kernel: return "kernel";
  }
  return "?";
}

// Positive-definiteness is spot-checked by a Cholesky attempt up to this size.
inline constexpr std::size_t kPdCheckMaxDim = 2000;

/// The symmetric system A w = b behind a ridge or kernel ridge fit,
/// together with what is needed to map its solution back to the data.
template <SystemMatrix M>
struct RidgeProblem {
  M a;
  Vector b;
  double lambda = 0.0;
  Route route = Route::primal;
  M x;            // n x d data the system was built from
  double sigma = 0.0;  // RBF bandwidth, kernel route only

  std::size_t m() const { return static_cast<std::size_t>(b.size()); }
  std::size_t n() const { return rows(x); }
  std::size_t d() const { return cols(x); }
};

namespace detail {

template <SystemMatrix M>
void check_data(const M& x, const Vector& y, double lambda) {
  if (x.rows() < 1 || x.cols() < 1) throw InputError("data matrix must have n, d >= 1");
  if (y.size() != x.rows()) throw InputError("target length does not match the number of samples");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("lambda must be a finite value >= 0");
  if (!all_finite(x) || !all_finite(y)) throw InputError("data contains non-finite values");
}

inline DenseMatrix symmetrized(const DenseMatrix& a) { return 0.5 * (a + a.transpose()); }

inline CsrMatrix symmetrized(const CsrMatrix& a) {
  CsrMatrix out = 0.5 * (a + CsrMatrix(a.transpose()));
  out.makeCompressed();
  return out;
}

inline DenseMatrix plus_scaled_identity(DenseMatrix a, double lambda) {
  a.diagonal().array() += lambda;
  return a;
}

inline CsrMatrix plus_scaled_identity(const CsrMatrix& a, double lambda) {
  CsrMatrix eye(a.rows(), a.cols());
  eye.setIdentity();
  CsrMatrix out = a + lambda * eye;
  out.makeCompressed();
  return out;
}

inline bool cholesky_succeeds(const DenseMatrix& a) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  return llt.info() == Eigen::Success;
}

inline bool cholesky_succeeds(const CsrMatrix& a) {
  Eigen::SparseMatrix<double> col_major(a);
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(col_major);
  return llt.info() == Eigen::Success;
}

template <SystemMatrix M>
void spot_check_positive_definite(const M& a, double lambda) {
  if (lambda > 0.0 && rows(a) <= kPdCheckMaxDim && !cholesky_succeeds(a)) {
    throw ContractViolation("assembled system matrix is not positive definite");
  }
}

inline double squared_distance(const DenseMatrix& x, Index i, Index j) {
  return (x.row(i) - x.row(j)).squaredNorm();
}

}  // namespace detail

/// Primal normal equations: (X^T X + lambda I) w = X^T y, with m = d.
template <SystemMatrix M>
RidgeProblem<M> build_primal(const M& x, const Vector& y, double lambda) {
  detail::check_data(x, y, lambda);
  RidgeProblem<M> p;
  if constexpr (std::same_as<M, DenseMatrix>) {
    p.a = detail::symmetrized(detail::plus_scaled_identity(x.transpose() * x, lambda));
  } else {
    const CsrMatrix xt = x.transpose();
    p.a = detail::symmetrized(detail::plus_scaled_identity(CsrMatrix(xt * x), lambda));
  }
  p.b = x.transpose() * y;
  p.lambda = lambda;
  p.route = Route::primal;
  p.x = x;
  detail::spot_check_positive_definite(p.a, lambda);
  return p;
}

/// Dual system: (X X^T + lambda I) alpha = y, with m = n and w = X^T alpha.
template <SystemMatrix M>
RidgeProblem<M> build_dual(const M& x, const Vector& y, double lambda) {
  detail::check_data(x, y, lambda);
  RidgeProblem<M> p;
  if constexpr (std::same_as<M, DenseMatrix>) {
    p.a = detail::symmetrized(detail::plus_scaled_identity(x * x.transpose(), lambda));
  } else {
    const CsrMatrix xt = x.transpose();
    p.a = detail::symmetrized(detail::plus_scaled_identity(CsrMatrix(x * xt), lambda));
  }
  p.b = y;
  p.lambda = lambda;
  p.route = Route::dual;
  p.x = x;
  detail::spot_check_positive_definite(p.a, lambda);
  return p;
}

/// Gaussian (RBF) Gram matrix K_ij = exp(-|x_i - x_j|^2 / (2 sigma^2)).
inline DenseMatrix rbf_kernel(const DenseMatrix& x, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InputError("sigma must be > 0");
  const Index n = x.rows();
  const double scale = 1.0 / (2.0 * sigma * sigma);
  DenseMatrix k(n, n);
  for (Index i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (Index j = i + 1; j < n; ++j) {
      const double v = std::exp(-detail::squared_distance(x, i, j) * scale);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

/// Kernel ridge system K (K + lambda I) alpha = K y. Always dense; the
/// data matrix is kept densified for prediction.
template <SystemMatrix M>
RidgeProblem<DenseMatrix> build_kernel(const M& x, const Vector& y, double lambda, double sigma) {
  detail::check_data(x, y, lambda);
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InputError("sigma must be > 0");
  RidgeProblem<DenseMatrix> p;
  p.x = to_dense(x);
  const DenseMatrix k = rbf_kernel(p.x, sigma);
  p.a = detail::symmetrized(k * detail::plus_scaled_identity(k, lambda));
  p.b = k * y;
  p.lambda = lambda;
  p.route = Route::kernel;
  p.sigma = sigma;
  detail::spot_check_positive_definite(p.a, lambda);
  return p;
}

/// Wraps an already assembled symmetric system A w = b. The data matrix is
/// taken to be A itself so recover_weights returns w unchanged.
template <SystemMatrix M>
RidgeProblem<M> make_system(const M& a, const Vector& b) {
  if (a.rows() != a.cols()) throw InputError("system matrix must be square");
  if (a.rows() != b.size()) throw InputError("right-hand side length must equal the system size");
  if (a.rows() == 0) throw InputError("empty system");
  if (!detail::all_finite(a) || !detail::all_finite(b)) throw InputError("system contains non-finite values");
  if (asymmetry(a) > kSymmetryTol) throw InputError("system matrix must be symmetric");
  RidgeProblem<M> p;
  p.a = a;
  p.b = b;
  p.x = a;
  return p;
}

/// Primal when d <= n (ties go to primal), dual otherwise.
template <SystemMatrix M>
RidgeProblem<M> auto_select(const M& x, const Vector& y, double lambda) {
  return x.cols() <= x.rows() ? build_primal(x, y, lambda) : build_dual(x, y, lambda);
}

/// Maps a solution of A w = b back to model coefficients: w itself for the
/// primal route, X^T alpha for the dual route, alpha for the kernel route.
template <SystemMatrix M>
Vector recover_weights(const RidgeProblem<M>& p, const Vector& solution) {
  if (static_cast<std::size_t>(solution.size()) != p.m()) {
    throw InputError("solution length does not match the system size");
  }
  switch (p.route) {
    case Route::primal:
      if (p.m() != p.d()) throw InputError("primal problem with inconsistent data shape");
      return solution;
    case Route::dual:
      if (p.m() != p.n()) throw InputError("dual problem with inconsistent data shape");
      return p.x.transpose() * solution;
    case Route::kernel:
      return solution;
  }
  throw InputError("unknown route");
}

inline double predict_kernel(const RidgeProblem<DenseMatrix>& p, const Vector& alpha, const Vector& x_new) {
  if (p.route != Route::kernel) throw InputError("predict_kernel needs a kernel problem");
  if (static_cast<std::size_t>(alpha.size()) != p.n()) throw InputError("alpha length must equal n");
  if (x_new.size() != p.x.cols()) throw InputError("query point has wrong dimension");
  const double scale = 1.0 / (2.0 * p.sigma * p.sigma);
  double acc = 0.0;
  for (Index i = 0; i < p.x.rows(); ++i) {
    acc += alpha(i) * std::exp(-(p.x.row(i).transpose() - x_new).squaredNorm() * scale);
  }
  return acc;
}

}  // namespace ridgesketch
