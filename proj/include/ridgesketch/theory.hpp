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
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "ridgesketch/linalg.hpp"
#include "ridgesketch/rng.hpp"
#include "ridgesketch/sketches.hpp"
#include "ridgesketch/solvers.hpp"

namespace ridgesketch {

// Relative cutoff below which an eigenvalue counts as zero when taking the
// smallest nonzero eigenvalue.
inline constexpr double kRankCutoff = 1e-12;
// Largest number of subsets enumerated explicitly for a subsample ensemble.
inline constexpr std::size_t kMaxEnumeratedRealizations = 5000;
// Expected projections are formed explicitly only up to this size.
inline constexpr std::size_t kOracleMaxDim = 200;

/// Finite distribution over explicit m x tau sketching matrices.
struct DiscreteSketchEnsemble {
  std::vector<DenseMatrix> realizations;
  std::vector<double> probabilities;

  std::size_t dim() const { return realizations.empty() ? 0 : rows(realizations.front()); }

  void validate() const {
    if (realizations.empty() || realizations.size() != probabilities.size()) {
      throw InputError("ensemble needs one probability per realization");
    }
    const double total = std::accumulate(probabilities.begin(), probabilities.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-12) throw InputError("ensemble probabilities must sum to 1");
    for (double p : probabilities) {
      if (!(p >= 0.0)) throw InputError("ensemble probabilities must be non-negative");
    }
    for (const auto& s : realizations) {
      if (s.rows() != realizations.front().rows() || s.cols() != realizations.front().cols()) {
        throw InputError("ensemble realizations differ in shape");
      }
    }
  }
};

/// Spectral data and rates of one (A, sketch distribution) pair.
struct RateCertificate {
  double rho = 0.0;
  double lambda_min_eh = 0.0;
  double trace_a = 0.0;
  double lambda_min_a = 0.0;
  double lambda_max_a = 0.0;
  double kappa = 0.0;
  std::optional<AccelParams> accel;
  bool accel_rank_deficient = false;
  bool estimated = false;        // Monte-Carlo instead of enumeration
  double standard_error = 0.0;   // max entrywise SE of the estimated E[H_S]
};

namespace detail {

inline std::size_t binomial_capped(std::size_t n, std::size_t k, std::size_t cap) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  long double acc = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    acc = acc * static_cast<long double>(n - k + i) / static_cast<long double>(i);
    if (acc > static_cast<long double>(cap)) return cap + 1;
  }
  return static_cast<std::size_t>(std::llround(acc));
}

// Pseudoinverse of a symmetric PSD matrix with the least-norm cutoff.
inline Eigen::MatrixXd pinv_sym(const Eigen::MatrixXd& m) {
  const SymmetricEigen eig = eig_sym(m);
  const double lambda_max = eig.values.size() ? eig.values.maxCoeff() : 0.0;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.rows(), m.cols());
  if (!(lambda_max > 0.0)) return out;
  for (Index i = 0; i < eig.values.size(); ++i) {
    if (eig.values(i) > kPinvRcond * lambda_max) {
      out.noalias() += (1.0 / eig.values(i)) * eig.vectors.col(i) * eig.vectors.col(i).transpose();
    }
  }
  return out;
}

// S (S^T A S)^+ S^T for one explicit realization.
inline Eigen::MatrixXd projection_term(const Eigen::MatrixXd& a, const Eigen::MatrixXd& s) {
  const Eigen::MatrixXd sas = s.transpose() * a * s;
  return s * pinv_sym(0.5 * (sas + sas.transpose())) * s.transpose();
}

inline Eigen::MatrixXd sqrt_spd(const Eigen::MatrixXd& a) {
  const SymmetricEigen eig = eig_sym(a);
  const Vector root = eig.values.cwiseMax(0.0).cwiseSqrt();
  return eig.vectors * root.asDiagonal() * eig.vectors.transpose();
}

inline double smallest_nonzero_eigenvalue(const Eigen::MatrixXd& m) {
  const SymmetricEigen eig = eig_sym(0.5 * (m + m.transpose()));
  const double top = eig.values.maxCoeff();
  if (!(top > 0.0)) return 0.0;
  for (Index i = 0; i < eig.values.size(); ++i) {
    if (eig.values(i) > kRankCutoff * top) return eig.values(i);
  }
  return top;
}

inline Eigen::MatrixXd dense_of(const DenseMatrix& a) { return a; }
inline Eigen::MatrixXd dense_of(const CsrMatrix& a) { return Eigen::MatrixXd(a); }

inline void check_oracle_scale(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw InputError("matrix must be square");
  if (static_cast<std::size_t>(a.rows()) > kOracleMaxDim) throw InputError("matrix exceeds oracle scale");
  if (asymmetry(a) > kSymmetryTol) throw ContractViolation("matrix is not symmetric");
}

}  // namespace detail

/// Deterministic S = I.
inline DiscreteSketchEnsemble identity_ensemble(std::size_t m) {
  return {{DenseMatrix::Identity(static_cast<Index>(m), static_cast<Index>(m))}, {1.0}};
}

/// All tau-subsets of {0..m-1} with equal probability (the subsample sketch).
inline DiscreteSketchEnsemble subsample_ensemble(std::size_t m, std::size_t tau) {
  if (tau < 1 || tau > m) throw InputError("sketch size must lie in [1, m]");
  const std::size_t count = detail::binomial_capped(m, tau, kMaxEnumeratedRealizations);
  if (count > kMaxEnumeratedRealizations) throw InputError("too many subsets to enumerate; use a Monte-Carlo estimate");
  DiscreteSketchEnsemble ens;
  ens.realizations.reserve(count);
  std::vector<std::size_t> pick(tau);
  std::iota(pick.begin(), pick.end(), std::size_t{0});
  while (true) {
    DenseMatrix s = DenseMatrix::Zero(static_cast<Index>(m), static_cast<Index>(tau));
    for (std::size_t j = 0; j < tau; ++j) s(static_cast<Index>(pick[j]), static_cast<Index>(j)) = 1.0;
    ens.realizations.push_back(std::move(s));
    // next combination in lexicographic order
    std::size_t pos = tau;
    while (pos > 0 && pick[pos - 1] == m - tau + pos - 1) --pos;
    if (pos == 0) break;
    ++pick[pos - 1];
    for (std::size_t j = pos; j < tau; ++j) pick[j] = pick[j - 1] + 1;
  }
  ens.probabilities.assign(ens.realizations.size(), 1.0 / static_cast<double>(ens.realizations.size()));
  return ens;
}

/// Unit vectors s_i drawn with probability s_i^T A s_i / sum_j s_j^T A s_j.
template <class AMatrix>
DiscreteSketchEnsemble single_column_ensemble(const AMatrix& a, const std::vector<Vector>& columns) {
  if (columns.empty()) throw InputError("need at least one column");
  const Eigen::MatrixXd dense = detail::dense_of(a);
  DiscreteSketchEnsemble ens;
  std::vector<double> weights;
  for (const Vector& s : columns) {
    if (s.size() != dense.rows()) throw InputError("column has wrong length");
    if (std::abs(s.norm() - 1.0) > 1e-12) throw InputError("columns must be unit vectors");
    ens.realizations.emplace_back(DenseMatrix(s));
    weights.push_back(s.dot(dense * s));
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (double w : weights) ens.probabilities.push_back(w / total);
  return ens;
}

/// Coordinate vectors e_i with probability A_ii / trace(A).
template <class AMatrix>
DiscreteSketchEnsemble coordinate_ensemble(const AMatrix& a) {
  std::vector<Vector> cols;
  for (Index i = 0; i < a.rows(); ++i) cols.push_back(Vector::Unit(a.rows(), i));
  return single_column_ensemble(a, cols);
}

/// E[H_S] = sum_i p_i S_i (S_i^T A S_i)^+ S_i^T.
template <class AMatrix>
Eigen::MatrixXd expected_projection(const AMatrix& a_in, const DiscreteSketchEnsemble& ens) {
  ens.validate();
  const Eigen::MatrixXd a = detail::dense_of(a_in);
  detail::check_oracle_scale(a);
  if (static_cast<Index>(ens.dim()) != a.rows()) throw InputError("ensemble dimension does not match A");
  Eigen::MatrixXd eh = Eigen::MatrixXd::Zero(a.rows(), a.cols());
  for (std::size_t i = 0; i < ens.realizations.size(); ++i) {
    if (ens.probabilities[i] == 0.0) continue;
    eh += ens.probabilities[i] * detail::projection_term(a, ens.realizations[i]);
  }
  return 0.5 * (eh + eh.transpose());
}

struct ProjectionEstimate {
  Eigen::MatrixXd mean;
  double standard_error;  // largest entrywise standard error of the mean
};

/// Monte-Carlo E[H_S] for a sketch kind, for ensembles too large to enumerate.
template <class AMatrix>
ProjectionEstimate estimate_expected_projection(const AMatrix& a_in, const SketchConfig& config, std::size_t samples,
                                                std::uint64_t seed) {
  if (samples < 2) throw InputError("need at least two samples");
  const Eigen::MatrixXd a = detail::dense_of(a_in);
  detail::check_oracle_scale(a);
  const auto m = static_cast<std::size_t>(a.rows());
  Rng rng(seed);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(a.rows(), a.cols());
  Eigen::MatrixXd sum_sq = sum;
  for (std::size_t t = 0; t < samples; ++t) {
    const SketchState st = draw(config, m, rng);
    const Eigen::MatrixXd term = detail::projection_term(a, materialize(st));
    sum += term;
    sum_sq += term.cwiseProduct(term);
  }
  const double n = static_cast<double>(samples);
  Eigen::MatrixXd mean = sum / n;
  const Eigen::MatrixXd var = ((sum_sq / n) - mean.cwiseProduct(mean)).cwiseMax(0.0) * (n / (n - 1.0));
  return {0.5 * (mean + mean.transpose()), std::sqrt(var.maxCoeff() / n)};
}

/// rho = smallest nonzero eigenvalue of A^{1/2} E[H_S] A^{1/2}, given E[H_S].
template <class AMatrix>
double rate_rho_from(const AMatrix& a_in, const Eigen::MatrixXd& eh) {
  const Eigen::MatrixXd a = detail::dense_of(a_in);
  const Eigen::MatrixXd root = detail::sqrt_spd(a);
  return detail::smallest_nonzero_eigenvalue(root * eh * root);
}

/// Linear rate of the plain method in the A-norm.
template <class AMatrix>
double rate_rho(const AMatrix& a, const DiscreteSketchEnsemble& ens) {
  return rate_rho_from(a, expected_projection(a, ens));
}

/// lambda_min(E[H_S]) for unit columns s_i under the s^T A s weighted
/// distribution, in closed form: lambda_min(F F^T) / sum_j s_j^T A s_j.
template <class AMatrix>
double lambda_min_eh_single_column(const AMatrix& a_in, const std::vector<Vector>& columns) {
  if (columns.empty()) throw InputError("need at least one column");
  const Eigen::MatrixXd a = detail::dense_of(a_in);
  Eigen::MatrixXd f(a.rows(), static_cast<Index>(columns.size()));
  double denom = 0.0;
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j].size() != a.rows()) throw InputError("column has wrong length");
    if (std::abs(columns[j].norm() - 1.0) > 1e-12) throw InputError("columns must be unit vectors");
    f.col(static_cast<Index>(j)) = columns[j];
    denom += columns[j].dot(a * columns[j]);
  }
  const double lmin = eig_sym(Eigen::MatrixXd(f * f.transpose())).values(0);
  return std::max(lmin, 0.0) / denom;
}

struct CdComplexities {
  double with_momentum;  // 4 trace(A) / eps
  double plain;          // trace(A) / lambda_min(A) * ln(lambda_max(A) / eps)
};

/// Iteration bounds of coordinate descent with (eta = 1/2) and without
/// momentum for E|Aw - b|^2 / |w0 - w*|_A^2 < eps. Natural logarithm.
template <class AMatrix>
CdComplexities cd_complexities(const AMatrix& a_in, double eps) {
  if (!(eps > 0.0)) throw InputError("eps must be > 0");
  const Eigen::MatrixXd a = detail::dense_of(a_in);
  const SymmetricEigen eig = eig_sym(a);
  const double trace = a.trace();
  const double lmin = eig.values(0);
  const double lmax = eig.values(eig.values.size() - 1);
  if (!(lmin > 0.0)) throw ContractViolation("A must be positive definite");
  return {4.0 * trace / eps, trace / lmin * std::log(lmax / eps)};
}

/// Scaled precisions eps/lambda_max for which the momentum bound of CD is
/// tighter: the roots of e (1 - e) = 4 / kappa. Empty when kappa < 16.
inline std::optional<std::pair<double, double>> superiority_region(double kappa) {
  if (!(kappa >= 1.0)) throw InputError("condition number must be >= 1");
  if (kappa < 16.0) return std::nullopt;
  const double half_width = 0.5 * std::sqrt(std::max(0.0, 1.0 - 16.0 / kappa));
  return std::make_pair(0.5 - half_width, 0.5 + half_width);
}

/// Last-iterate residual bound with constant eta:
///   |A w^k - b|^2 <= init / (lambda_min(E[H_S]) k eta (1 - eta)).
inline double momentum_bound(double eta, std::size_t k, double init_err_a_norm_sq, double lambda_min_eh) {
  if (!(eta > 0.0 && eta < 1.0)) throw InputError("eta must lie in (0, 1)");
  if (k < 1) throw InputError("k must be >= 1");
  if (!(lambda_min_eh > 0.0)) throw InputError("lambda_min(E[H_S]) must be > 0");
  return init_err_a_norm_sq / (lambda_min_eh * static_cast<double>(k) * eta * (1.0 - eta));
}

/// General-sequence version: init / (lambda_min(E[H_S]) sum_{t=0}^{k} eta_t (1 - eta_t)).
inline double momentum_bound_general(const std::vector<double>& etas, std::size_t k, double init_err_a_norm_sq,
                                     double lambda_min_eh) {
  if (etas.size() <= k) throw InputError("need eta_0 .. eta_k");
  if (!(lambda_min_eh > 0.0)) throw InputError("lambda_min(E[H_S]) must be > 0");
  double denom = 0.0;
  for (std::size_t t = 0; t <= k; ++t) denom += etas[t] * (1.0 - etas[t]);
  if (!(denom > 0.0)) throw InputError("eta sequence gives a zero denominator");
  return init_err_a_norm_sq / (lambda_min_eh * denom);
}

/// Inner product in which mu and nu are measured.
///   euclidean  : Z = A S (S^T A S)^+ S^T A with the plain inner product
///   a_weighted : Z measured in the A-norm, i.e. A^{-1/2} Z A^{-1/2}
enum class AccelGeometry { euclidean, a_weighted };

struct AccelCertificate {
  AccelParams params;
  bool rank_deficient = false;  // E[Z] singular; mu is its smallest nonzero eigenvalue
};

/// Exact acceleration parameters by enumeration:
///   mu = inf_x <E[Z] x, x> / <x, x>,
///   nu = sup_x <E[Z E[Z]^+ Z] x, x> / <E[Z] x, x>,
/// with x ranging over range(A) (all of R^m for SPD A).
template <class AMatrix>
AccelCertificate accel_params_exact(const AMatrix& a_in, const DiscreteSketchEnsemble& ens,
                                    AccelGeometry geometry = AccelGeometry::euclidean) {
  ens.validate();
  const Eigen::MatrixXd a = detail::dense_of(a_in);
  detail::check_oracle_scale(a);
  if (static_cast<Index>(ens.dim()) != a.rows()) throw InputError("ensemble dimension does not match A");

  const Eigen::MatrixXd left = geometry == AccelGeometry::euclidean ? a : detail::sqrt_spd(a);
  std::vector<Eigen::MatrixXd> z;
  z.reserve(ens.realizations.size());
  Eigen::MatrixXd ez = Eigen::MatrixXd::Zero(a.rows(), a.cols());
  for (std::size_t i = 0; i < ens.realizations.size(); ++i) {
    Eigen::MatrixXd zi = left * detail::projection_term(a, ens.realizations[i]) * left;
    zi = 0.5 * (zi + zi.transpose());
    ez += ens.probabilities[i] * zi;
    z.push_back(std::move(zi));
  }

  const SymmetricEigen eig = eig_sym(ez);
  const double top = eig.values.maxCoeff();
  if (!(top > 0.0)) throw ContractViolation("E[Z] vanishes");
  std::vector<Index> kept;
  for (Index i = 0; i < eig.values.size(); ++i) {
    if (eig.values(i) > kRankCutoff * top) kept.push_back(i);
  }
  AccelCertificate cert;
  cert.rank_deficient = kept.size() < static_cast<std::size_t>(a.rows());
  cert.params.mu = eig.values(kept.front());

  // Restrict to range(E[Z]) and whiten: nu = lambda_max(L^{-1/2} U^T N U L^{-1/2}).
  Eigen::MatrixXd basis(a.rows(), static_cast<Index>(kept.size()));
  Vector inv_root(static_cast<Index>(kept.size()));
  Eigen::MatrixXd ez_pinv = Eigen::MatrixXd::Zero(a.rows(), a.cols());
  for (std::size_t j = 0; j < kept.size(); ++j) {
    const Index i = kept[j];
    basis.col(static_cast<Index>(j)) = eig.vectors.col(i);
    inv_root(static_cast<Index>(j)) = 1.0 / std::sqrt(eig.values(i));
    ez_pinv.noalias() += (1.0 / eig.values(i)) * eig.vectors.col(i) * eig.vectors.col(i).transpose();
  }
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(a.rows(), a.cols());
  for (std::size_t i = 0; i < z.size(); ++i) n += ens.probabilities[i] * (z[i] * ez_pinv * z[i]);
  const Eigen::MatrixXd whitened = inv_root.asDiagonal() * (basis.transpose() * n * basis) * inv_root.asDiagonal();
  cert.params.nu = eig_sym(Eigen::MatrixXd(0.5 * (whitened + whitened.transpose()))).values.maxCoeff();
  return cert;
}

/// Rate certificate by enumeration.
template <class AMatrix>
RateCertificate certify(const AMatrix& a_in, const DiscreteSketchEnsemble& ens) {
  const Eigen::MatrixXd a = detail::dense_of(a_in);
  RateCertificate cert;
  const SymmetricEigen eig = eig_sym(a);
  cert.trace_a = a.trace();
  cert.lambda_min_a = eig.values(0);
  cert.lambda_max_a = eig.values(eig.values.size() - 1);
  cert.kappa = cert.lambda_max_a / cert.lambda_min_a;
  const Eigen::MatrixXd eh = expected_projection(a, ens);
  cert.lambda_min_eh = std::max(0.0, eig_sym(eh).values(0));
  cert.rho = rate_rho_from(a, eh);
  const AccelCertificate accel = accel_params_exact(a, ens);
  cert.accel = accel.params;
  cert.accel_rank_deficient = accel.rank_deficient;
  return cert;
}

/// Rate certificate for a sketch kind: exact when the subsample ensemble can
/// be enumerated, Monte-Carlo otherwise (no acceleration parameters then).
template <class AMatrix>
RateCertificate certify(const AMatrix& a_in, const SketchConfig& config, std::size_t samples = 2000,
                        std::uint64_t seed = 0) {
  const Eigen::MatrixXd a = detail::dense_of(a_in);
  const auto m = static_cast<std::size_t>(a.rows());
  if (config.kind == SketchKind::subsample &&
      detail::binomial_capped(m, config.sketch_size, kMaxEnumeratedRealizations) <= kMaxEnumeratedRealizations) {
    return certify(a, subsample_ensemble(m, config.sketch_size));
  }
  RateCertificate cert;
  const SymmetricEigen eig = eig_sym(a);
  cert.trace_a = a.trace();
  cert.lambda_min_a = eig.values(0);
  cert.lambda_max_a = eig.values(eig.values.size() - 1);
  cert.kappa = cert.lambda_max_a / cert.lambda_min_a;
  const ProjectionEstimate est = estimate_expected_projection(a, config, samples, seed);
  cert.lambda_min_eh = std::max(0.0, eig_sym(est.mean).values(0));
  cert.rho = rate_rho_from(a, est.mean);
  cert.estimated = true;
  cert.standard_error = est.standard_error;
  return cert;
}

}  // namespace ridgesketch
