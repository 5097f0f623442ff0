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

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>

#include "ridgesketch/linalg.hpp"
#include "ridgesketch/problem.hpp"
#include "ridgesketch/rng.hpp"
#include "ridgesketch/schedules.hpp"
#include "ridgesketch/sketches.hpp"

namespace ridgesketch {

/// Called with (k, w^k) for the initial iterate and after every update.
using IterateObserver = std::function<void(std::size_t, const Vector&)>;

/// Produces the sketch for one iteration from the run's generator.
using SketchSource = std::function<SketchState(Rng&)>;

struct SolverConfig {
  double tolerance = 1e-4;  // on |r^k| / |r^0|
  std::size_t max_iter = 1000;
  SketchConfig sketch;
  double step_size = 1.0;  // gamma of the plain method
  std::uint64_t seed = 0;
  std::size_t residual_refresh_every = 0;  // 0 = never
  double divergence_threshold = 1e8;       // on the relative residual
  IterateObserver observer;
  IterateObserver residual_observer;  // receives the maintained A w^k - b

  void validate() const {
    if (!(tolerance > 0.0)) throw InputError("tolerance must be > 0");
    if (!(step_size > 0.0 && step_size <= 1.0)) throw InputError("step size must lie in (0, 1]");
  }
};

struct SolveReport {
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> residual_trace;  // relative residual, trace[0] = 1
  std::vector<double> wall_times;      // cumulative seconds, aligned with the trace
  std::vector<std::size_t> refreshed_at;  // iterations whose residual was recomputed exactly
  Vector solution;
};

/// Acceleration parameters; valid when 0 < mu <= 1/nu <= 1.
struct AccelParams {
  double mu = 1.0;
  double nu = 1.0;

  bool feasible() const { return mu > 0.0 && nu >= 1.0 && mu * nu <= 1.0 + 1e-12; }
};

namespace detail {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

template <SystemMatrix M>
Vector residual(const RidgeProblem<M>& p, const Vector& w) {
  Vector r = p.a * w;
  r -= p.b;
  return r;
}

template <SystemMatrix M>
void check_problem(const RidgeProblem<M>& p) {
  if (rows(p.a) != p.m() || cols(p.a) != p.m()) throw InputError("system matrix and right-hand side disagree in size");
  if (p.m() == 0) throw InputError("empty system");
}

// Tracks the stopping rule and the trace shared by every iterative solver.
class Progress {
 public:
  Progress(SolveReport& report, double initial_norm, const SolverConfig& config)
      : report_(report), norm0_(initial_norm), config_(config) {
    report_.residual_trace.push_back(1.0);
    report_.wall_times.push_back(0.0);
  }

  bool trivially_solved() const { return norm0_ == 0.0; }

  bool done(std::size_t k) const {
    return k >= config_.max_iter || report_.residual_trace.back() <= config_.tolerance;
  }

  // Records ||r^{k}|| after an update; throws if the run has blown up.
  void record(std::size_t k, double residual_norm, const Vector& last_finite) {
    const double rel = residual_norm / norm0_;
    if (!std::isfinite(rel) || rel > config_.divergence_threshold) {
      throw DivergenceError("solver diverged at iteration " + std::to_string(k) + " (relative residual " +
                                std::to_string(rel) + ")",
                            last_finite, k);
    }
    report_.residual_trace.push_back(rel);
    report_.wall_times.push_back(clock_.seconds());
  }

  void finish(std::size_t k, Vector solution) {
    report_.iterations = k;
    report_.converged = trivially_solved() || report_.residual_trace.back() <= config_.tolerance;
    report_.solution = std::move(solution);
  }

 private:
  SolveReport& report_;
  double norm0_;
  const SolverConfig& config_;
  Stopwatch clock_;
};

template <SystemMatrix M>
SketchSource default_source(const SolverConfig& config, std::size_t m) {
  return [sketch = config.sketch, m](Rng& rng) { return draw(sketch, m, rng); };
}

inline bool refresh_due(const SolverConfig& c, std::size_t next_k) {
  return c.residual_refresh_every > 0 && next_k % c.residual_refresh_every == 0;
}

// Heavy-ball sketch-and-project:
//   delta_k = (S^T A S)^+ S^T r^k
//   w^{k+1} = (1 + beta_k) w^k - beta_k w^{k-1} - gamma_k S delta_k
//   r^{k+1} = (1 + beta_k) r^k - beta_k r^{k-1} - gamma_k (A S) delta_k
// A is symmetric, so A S delta = (S^T A)^T delta. With beta_k = 0 the
// update reduces exactly to the plain method.
template <SystemMatrix M, class StepFn>
SolveReport heavy_ball(const RidgeProblem<M>& p, const SolverConfig& config, const SketchSource& source,
                       StepFn&& step_at, Vector w) {
  check_problem(p);
  config.validate();
  if (static_cast<std::size_t>(w.size()) != p.m()) throw InputError("initial iterate has wrong length");

  SolveReport report;
  Vector r = residual(p, w);
  Progress progress(report, r.norm(), config);
  if (config.observer) config.observer(0, w);
  if (config.residual_observer) config.residual_observer(0, r);
  if (progress.trivially_solved()) {
    progress.finish(0, std::move(w));
    return report;
  }

  Rng rng(config.seed);
  Vector w_prev = w;
  Vector r_prev = r;
  std::size_t k = 0;
  while (!progress.done(k)) {
    const MomentumStep s = step_at(k);
    const SketchState st = source(rng);
    const SketchOutcome out = apply(st, p.a, r);
    const Vector delta = least_norm_solution(out.sas, out.rs);
    const Vector a_s_delta = out.sa.transpose() * delta;

    Vector w_next;
    Vector r_next;
    if (s.beta == 0.0) {
      w_next = apply_update(st, w, delta, s.gamma);
      r_next = r - s.gamma * a_s_delta;
    } else {
      w_next = (1.0 + s.beta) * w - s.beta * w_prev;
      w_next = apply_update(st, std::move(w_next), delta, s.gamma);
      r_next = (1.0 + s.beta) * r - s.beta * r_prev - s.gamma * a_s_delta;
    }
    if (refresh_due(config, k + 1)) {
      r_next = residual(p, w_next);
      r = residual(p, w);
      report.refreshed_at.push_back(k + 1);
    }
    progress.record(k + 1, r_next.norm(), w);
    w_prev = std::move(w);
    r_prev = std::move(r);
    w = std::move(w_next);
    r = std::move(r_next);
    ++k;
    if (config.observer) config.observer(k, w);
    if (config.residual_observer) config.residual_observer(k, r);
  }
  progress.finish(k, std::move(w));
  return report;
}

}  // namespace detail

/// Plain sketch-and-project from w^0 = 0 with constant step size
/// config.step_size: w^{k+1} = w^k - gamma S_k (S_k^T A S_k)^+ S_k^T r^k.
template <SystemMatrix M>
SolveReport solve_sketch_project(const RidgeProblem<M>& p, const SolverConfig& config) {
  return detail::heavy_ball(p, config, detail::default_source<M>(config, p.m()),
                            [g = config.step_size](std::size_t) { return MomentumStep{g, 0.0}; },
                            Vector::Zero(static_cast<Index>(p.m())));
}

/// Warm start from an arbitrary w0; the initial residual is computed exactly.
template <SystemMatrix M>
SolveReport solve_sketch_project(const RidgeProblem<M>& p, const SolverConfig& config, const Vector& w0) {
  return detail::heavy_ball(p, config, detail::default_source<M>(config, p.m()),
                            [g = config.step_size](std::size_t) { return MomentumStep{g, 0.0}; }, w0);
}

/// Sketch-and-project with heavy-ball momentum, w^{-1} = w^0 = 0.
template <SystemMatrix M>
SolveReport solve_momentum(const RidgeProblem<M>& p, const SolverConfig& config, MomentumSchedule schedule,
                           const SketchSource& source = {}) {
  const SketchSource& src = source ? source : detail::default_source<M>(config, p.m());
  return detail::heavy_ball(p, config, src, [&schedule](std::size_t k) { return schedule.at(k); },
                            Vector::Zero(static_cast<Index>(p.m())));
}

/// Momentum in its iterate-averaging form:
///   z^k     = z^{k-1} - eta_k S_k delta_k,            z^{-1} = w^0 = 0
///   w^{k+1} = (1 - c_k) w^k + c_k z^k,                c_k = 1 / (zeta_{k+1} + 1)
/// with zeta built from eta as in MomentumSchedule. Generates the same
/// iterates as solve_momentum with the matching theoretical schedule.
template <SystemMatrix M>
SolveReport solve_momentum_averaging_form(const RidgeProblem<M>& p, const SolverConfig& config,
                                          const std::function<double(std::size_t)>& eta_sequence,
                                          const SketchSource& source = {}) {
  detail::check_problem(p);
  config.validate();
  const SketchSource& src = source ? source : detail::default_source<M>(config, p.m());

  SolveReport report;
  const auto m = static_cast<Index>(p.m());
  Vector w = Vector::Zero(m);
  Vector r_w = -p.b;
  Vector z = w;
  Vector r_z = r_w;
  detail::Progress progress(report, r_w.norm(), config);
  if (config.observer) config.observer(0, w);
  if (config.residual_observer) config.residual_observer(0, r_w);
  if (progress.trivially_solved()) {
    progress.finish(0, std::move(w));
    return report;
  }

  // zeta_{k} = prefix_{k} / eta_k, prefix_k = sum_{t<k} eta_t (1 - eta_t)
  std::vector<double> etas;
  auto eta_at = [&](std::size_t j) {
    while (etas.size() <= j) {
      const double e = eta_sequence(etas.size());
      if (!(e > 0.0 && e <= 1.0)) throw InputError("eta must lie in (0, 1]");
      etas.push_back(e);
    }
    return etas[j];
  };
  double prefix = 0.0;

  Rng rng(config.seed);
  std::size_t k = 0;
  while (!progress.done(k)) {
    const double eta_k = eta_at(k);
    prefix += eta_k * (1.0 - eta_k);
    const double zeta_next = prefix / eta_at(k + 1);
    const double c = 1.0 / (zeta_next + 1.0);

    const SketchState st = src(rng);
    const SketchOutcome out = apply(st, p.a, r_w);
    const Vector delta = least_norm_solution(out.sas, out.rs);
    z = apply_update(st, std::move(z), delta, eta_k);
    r_z.noalias() -= eta_k * (out.sa.transpose() * delta);

    Vector w_next = (1.0 - c) * w + c * z;
    Vector r_next = (1.0 - c) * r_w + c * r_z;
    if (detail::refresh_due(config, k + 1)) {
      r_next = detail::residual(p, w_next);
      r_z = detail::residual(p, z);
      report.refreshed_at.push_back(k + 1);
    }
    progress.record(k + 1, r_next.norm(), w);
    w = std::move(w_next);
    r_w = std::move(r_next);
    ++k;
    if (config.observer) config.observer(k, w);
    if (config.residual_observer) config.residual_observer(k, r_w);
  }
  progress.finish(k, std::move(w));
  return report;
}

/// Accelerated sketch-and-project. With
///   beta = 1 - sqrt(mu/nu), gamma = sqrt(1/(mu nu)), alpha = 1/(1 + sqrt(nu/mu)):
///   z^k = alpha v^k + (1 - alpha) w^k,  g^k = S_k delta_k (sketching r_z^k)
///   w^{k+1} = z^k - g^k,  v^{k+1} = beta v^k + (1 - beta) z^k - gamma g^k
/// The residuals of z, w and v are carried alongside. Stops on |r_v| / |r_v^0|.
template <SystemMatrix M>
SolveReport solve_accelerated(const RidgeProblem<M>& p, const SolverConfig& config, AccelParams accel) {
  detail::check_problem(p);
  config.validate();
  if (!accel.feasible()) throw InputError("acceleration parameters need 0 < mu <= 1/nu <= 1");
  const double beta = 1.0 - std::sqrt(accel.mu / accel.nu);
  const double gamma = std::sqrt(1.0 / (accel.mu * accel.nu));
  const double alpha = 1.0 / (1.0 + std::sqrt(accel.nu / accel.mu));
  const SketchSource src = detail::default_source<M>(config, p.m());

  SolveReport report;
  const auto m = static_cast<Index>(p.m());
  Vector w = Vector::Zero(m);
  Vector v = w;
  Vector r_w = -p.b;
  Vector r_v = r_w;
  detail::Progress progress(report, r_v.norm(), config);
  if (config.observer) config.observer(0, w);
  if (config.residual_observer) config.residual_observer(0, r_w);
  if (progress.trivially_solved()) {
    progress.finish(0, std::move(w));
    return report;
  }

  Rng rng(config.seed);
  std::size_t k = 0;
  while (!progress.done(k)) {
    const Vector z = alpha * v + (1.0 - alpha) * w;
    const Vector r_z = alpha * r_v + (1.0 - alpha) * r_w;
    const SketchState st = src(rng);
    const SketchOutcome out = apply(st, p.a, r_z);
    const Vector delta = least_norm_solution(out.sas, out.rs);
    const Vector g = expand(st, delta);
    const Vector a_g = out.sa.transpose() * delta;

    Vector w_next = z - g;
    Vector v_next = beta * v + (1.0 - beta) * z - gamma * g;
    Vector r_w_next = r_z - a_g;
    Vector r_v_next = beta * r_v + (1.0 - beta) * r_z - gamma * a_g;
    if (detail::refresh_due(config, k + 1)) {
      r_w_next = detail::residual(p, w_next);
      r_v_next = detail::residual(p, v_next);
      report.refreshed_at.push_back(k + 1);
    }
    progress.record(k + 1, r_v_next.norm(), w);
    w = std::move(w_next);
    v = std::move(v_next);
    r_w = std::move(r_w_next);
    r_v = std::move(r_v_next);
    ++k;
    if (config.observer) config.observer(k, w);
    if (config.residual_observer) config.residual_observer(k, r_w);
  }
  progress.finish(k, std::move(w));
  return report;
}

/// Distribution over coordinates with p_i = A_ii / trace(A), sampled by
/// inverting the cumulative sum.
class CoordinateSampler {
 public:
  template <SystemMatrix M>
  explicit CoordinateSampler(const M& a) {
    const Vector diag = diagonal(a);
    if (diag.size() == 0) throw InputError("empty matrix");
    if ((diag.array() <= 0.0).any()) throw InputError("coordinate sampling needs a positive diagonal");
    const double trace = diag.sum();
    probabilities_.resize(static_cast<std::size_t>(diag.size()));
    cumulative_.resize(probabilities_.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < probabilities_.size(); ++i) {
      probabilities_[i] = diag(static_cast<Index>(i)) / trace;
      acc += probabilities_[i];
      cumulative_[i] = acc;
    }
    cumulative_.back() = 1.0;
  }

  std::size_t sample(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return std::min(static_cast<std::size_t>(it - cumulative_.begin()), cumulative_.size() - 1);
  }

  const std::vector<double>& probabilities() const { return probabilities_; }

  /// Single-coordinate sketches e_i drawn from this distribution.
  SketchSource as_sketch_source() const {
    return [self = *this](Rng& rng) {
      SketchState st;
      st.kind = SketchKind::subsample;
      st.m = self.probabilities_.size();
      st.tau = 1;
      st.rows = {self.sample(rng)};
      return st;
    };
  }

 private:
  std::vector<double> probabilities_;
  std::vector<double> cumulative_;
};

template <SystemMatrix M>
CoordinateSampler coordinate_sampler(const M& a) {
  return CoordinateSampler(a);
}

/// Coordinate descent with heavy-ball momentum:
///   w^{k+1} = w^k - gamma_k (r_i / A_ii) e_i + beta_k (w^k - w^{k-1}),
/// i drawn with probability A_ii / trace(A). Touches one row of A per step
/// plus O(m) vector work for the momentum and residual bookkeeping.
template <SystemMatrix M>
SolveReport solve_cd_momentum(const RidgeProblem<M>& p, const SolverConfig& config, MomentumSchedule schedule) {
  detail::check_problem(p);
  config.validate();
  const CoordinateSampler sampler(p.a);
  const Vector diag = diagonal(p.a);

  SolveReport report;
  const auto m = static_cast<Index>(p.m());
  Vector w = Vector::Zero(m);
  Vector r = -p.b;
  detail::Progress progress(report, r.norm(), config);
  if (config.observer) config.observer(0, w);
  if (config.residual_observer) config.residual_observer(0, r);
  if (progress.trivially_solved()) {
    progress.finish(0, std::move(w));
    return report;
  }

  Rng rng(config.seed);
  Vector w_prev = w;
  Vector r_prev = r;
  Vector a_col = Vector::Zero(m);
  std::size_t k = 0;
  while (!progress.done(k)) {
    const MomentumStep s = schedule.at(k);
    const std::size_t i = sampler.sample(rng);
    const auto ii = static_cast<Index>(i);
    const double step = r(ii) / diag(ii);
    a_col.setZero();
    axpy_row(p.a, i, 1.0, a_col.transpose());  // row i == column i

    Vector w_next;
    Vector r_next;
    if (s.beta == 0.0) {
      w_next = w;
      r_next = r - (s.gamma * step) * a_col;
    } else {
      w_next = (1.0 + s.beta) * w - s.beta * w_prev;
      r_next = (1.0 + s.beta) * r - s.beta * r_prev - s.gamma * (step * a_col);
    }
    w_next(ii) -= s.gamma * step;
    if (detail::refresh_due(config, k + 1)) {
      r_next = detail::residual(p, w_next);
      r = detail::residual(p, w);
      report.refreshed_at.push_back(k + 1);
    }
    progress.record(k + 1, r_next.norm(), w);
    w_prev = std::move(w);
    r_prev = std::move(r);
    w = std::move(w_next);
    r = std::move(r_next);
    ++k;
    if (config.observer) config.observer(k, w);
    if (config.residual_observer) config.residual_observer(k, r);
  }
  progress.finish(k, std::move(w));
  return report;
}

/// Conjugate gradients from w^0 = 0 with the same relative-residual stop.
template <SystemMatrix M>
SolveReport solve_cg(const RidgeProblem<M>& p, const SolverConfig& config) {
  detail::check_problem(p);
  if (!(config.tolerance > 0.0)) throw InputError("tolerance must be > 0");
  SolveReport report;
  const auto m = static_cast<Index>(p.m());
  Vector w = Vector::Zero(m);
  Vector r = p.b;  // negative residual b - A w
  detail::Progress progress(report, r.norm(), config);
  if (config.observer) config.observer(0, w);
  if (config.residual_observer) config.residual_observer(0, Vector(-r));
  if (progress.trivially_solved()) {
    progress.finish(0, std::move(w));
    return report;
  }
  Vector dir = r;
  double rr = r.squaredNorm();
  std::size_t k = 0;
  while (!progress.done(k)) {
    const Vector a_dir = p.a * dir;
    const double curvature = dir.dot(a_dir);
    if (!(curvature > 0.0)) break;  // exact solve reached or A not positive definite
    const double step = rr / curvature;
    w.noalias() += step * dir;
    r.noalias() -= step * a_dir;
    if (detail::refresh_due(config, k + 1)) {
      r = p.b - p.a * w;
      report.refreshed_at.push_back(k + 1);
    }
    const double rr_next = r.squaredNorm();
    progress.record(k + 1, std::sqrt(rr_next), w);
    dir = r + (rr_next / rr) * dir;
    rr = rr_next;
    ++k;
    if (config.observer) config.observer(k, w);
    if (config.residual_observer) config.residual_observer(k, Vector(-r));
  }
  progress.finish(k, std::move(w));
  return report;
}

/// Factorization-based solve of A w = b (LDL^T).
template <SystemMatrix M>
Vector solve_direct(const RidgeProblem<M>& p) {
  detail::check_problem(p);
  if constexpr (std::same_as<M, DenseMatrix>) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(p.a);
    if (ldlt.info() != Eigen::Success) throw ContractViolation("direct solve: factorization failed");
    return ldlt.solve(p.b);
  } else {
    Eigen::SparseMatrix<double> col_major(p.a);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(col_major);
    if (ldlt.info() != Eigen::Success) throw ContractViolation("direct solve: factorization failed");
    return ldlt.solve(p.b);
  }
}

/// Relative residuals of the running averages wbar^t = (1/t) sum_{k<t} w^k,
/// t = 1..iterates.size(); post-processing for averaged-iterate guarantees.
template <SystemMatrix M>
std::vector<double> averaged_iterate_residuals(const RidgeProblem<M>& p, const std::vector<Vector>& iterates) {
  std::vector<double> out;
  out.reserve(iterates.size());
  const double norm0 = p.b.norm();
  Vector sum = Vector::Zero(static_cast<Index>(p.m()));
  for (std::size_t t = 0; t < iterates.size(); ++t) {
    sum += iterates[t];
    const Vector avg = sum / static_cast<double>(t + 1);
    out.push_back(detail::residual(p, avg).norm() / norm0);
  }
  return out;
}

}  // namespace ridgesketch
