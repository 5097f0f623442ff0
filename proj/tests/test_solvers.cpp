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

#include <gtest/gtest.h>

#include <vector>

#include "ridgesketch/solvers.hpp"
#include "test_support.hpp"

namespace rs = ridgesketch;

namespace {

struct Recorded {
  std::vector<rs::Vector> iterates;
  std::vector<rs::Vector> residuals;
};

rs::SolverConfig recording(rs::SolverConfig c, Recorded& rec) {
  c.observer = [&rec](std::size_t, const rs::Vector& w) { rec.iterates.push_back(w); };
  c.residual_observer = [&rec](std::size_t, const rs::Vector& r) { rec.residuals.push_back(r); };
  return c;
}

double max_diff(const std::vector<rs::Vector>& a, const std::vector<rs::Vector>& b) {
  EXPECT_EQ(a.size(), b.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k) {
    worst = std::max(worst, (a[k] - b[k]).cwiseAbs().maxCoeff());
  }
  return worst;
}

rs::SolverConfig config(rs::SketchKind kind, std::size_t tau, std::uint64_t seed, std::size_t max_iter = 1000,
                        double tol = 1e-4) {
  rs::SolverConfig c;
  c.sketch = {kind, tau};
  c.seed = seed;
  c.max_iter = max_iter;
  c.tolerance = tol;
  return c;
}

}  // namespace

TEST(SketchProject, FullSubsampleSolvesInOneStep) {
  for (int m : {1, 5, 30, 100}) {
    const auto p = oracle::system(oracle::random_spd(m, m), oracle::random_vector(m, m + 1));
    const auto rep = rs::solve_sketch_project(p, config(rs::SketchKind::subsample, m, 1));
    EXPECT_EQ(rep.iterations, 1u);
    EXPECT_LE(rep.residual_trace.back(), 1e-10);
    EXPECT_LE((p.a * rep.solution - p.b).norm() / p.b.norm(), 1e-10);
  }
}

TEST(SketchProject, ZeroRhsIsImmediatelySolved) {
  const auto p = oracle::system(oracle::random_spd(6, 1), rs::Vector::Zero(6));
  const auto rep = rs::solve_sketch_project(p, config(rs::SketchKind::gaussian, 2, 1));
  EXPECT_EQ(rep.iterations, 0u);
  EXPECT_TRUE(rep.converged);
  EXPECT_EQ(rep.solution, rs::Vector::Zero(6));
}

TEST(SketchProject, ConvergesForEverySketchOnDenseAndCsr) {
  const auto a = oracle::random_spd(40, 3);
  const auto b = oracle::random_vector(40, 4);
  const auto dense = oracle::system(a, b);
  const auto sparse = rs::make_system(oracle::to_csr(a), b);
  for (auto k : rs::kAllSketchKinds) {
    const auto c = config(k, 8, 5, 5000);
    const auto rd = rs::solve_sketch_project(dense, c);
    const auto rsp = rs::solve_sketch_project(sparse, c);
    EXPECT_TRUE(rd.converged) << rs::to_string(k);
    EXPECT_TRUE(rsp.converged) << rs::to_string(k);
    EXPECT_EQ(rd.iterations, rsp.iterations) << rs::to_string(k);
    EXPECT_LE((a * rd.solution - b).norm() / b.norm(), 2e-4);
  }
}

TEST(SketchProject, ProjectionConsistency) {
  const auto a = oracle::random_spd(12, 7);
  const auto p = oracle::system(a, oracle::random_vector(12, 8));
  for (auto kind : rs::kAllSketchKinds) {
    std::vector<rs::SketchState> states;
    const rs::SketchConfig sc{kind, 3};
    const rs::SketchSource source = [&](rs::Rng& rng) {
      states.push_back(rs::draw(sc, 12, rng));
      return states.back();
    };
    Recorded rec;
    rs::solve_momentum(p, recording(config(kind, 3, 9, 30, 1e-14), rec), rs::MomentumSchedule::none(), source);
    ASSERT_EQ(states.size() + 1, rec.iterates.size());
    for (std::size_t k = 0; k < states.size(); ++k) {
      const Eigen::MatrixXd s = rs::materialize(states[k]);
      const Eigen::MatrixXd sas = s.transpose() * a * s;
      const rs::Vector str = s.transpose() * (a * rec.iterates[k + 1] - p.b);
      const rs::Vector projected = sas * oracle::pinv(sas) * str;
      EXPECT_LE(projected.norm(), 1e-8 * std::max(1.0, p.b.norm())) << rs::to_string(kind) << " k=" << k;
    }
  }
}

TEST(SketchProject, ANormErrorIsMonotone) {
  const auto a = oracle::random_spd(15, 11);
  const auto b = oracle::random_vector(15, 12);
  const rs::Vector w_star = a.ldlt().solve(b);
  const auto p = oracle::system(a, b);
  for (auto kind : rs::kAllSketchKinds) {
    Recorded rec;
    rs::solve_sketch_project(p, recording(config(kind, 4, 13, 200, 1e-12), rec));
    for (std::size_t k = 1; k < rec.iterates.size(); ++k) {
      const double before = oracle::a_norm_sq(a, rec.iterates[k - 1] - w_star);
      const double after = oracle::a_norm_sq(a, rec.iterates[k] - w_star);
      EXPECT_LE(after, before * (1 + 1e-9) + 1e-20) << rs::to_string(kind) << " k=" << k;
    }
  }
}

TEST(SketchProject, WarmStartUsesExactInitialResidual) {
  const auto p = oracle::system(oracle::random_spd(10, 1), oracle::random_vector(10, 2));
  const rs::Vector w0 = oracle::random_vector(10, 3);
  Recorded rec;
  const auto rep = rs::solve_sketch_project(p, recording(config(rs::SketchKind::subsample, 2, 4), rec), w0);
  EXPECT_EQ(rec.iterates.front(), w0);
  EXPECT_LT((rec.residuals.front() - (p.a * w0 - p.b)).norm(), 1e-14);
  EXPECT_TRUE(rep.converged);
  EXPECT_THROW(rs::solve_sketch_project(p, config(rs::SketchKind::subsample, 2, 4), rs::Vector::Zero(3)),
               rs::InputError);
}

TEST(SketchProject, Deterministic) {
  const auto p = oracle::system(oracle::random_spd(20, 1), oracle::random_vector(20, 2));
  for (auto kind : rs::kAllSketchKinds) {
    const auto a = rs::solve_sketch_project(p, config(kind, 4, 77));
    const auto b = rs::solve_sketch_project(p, config(kind, 4, 77));
    EXPECT_EQ(a.residual_trace, b.residual_trace);
    EXPECT_EQ(a.solution, b.solution);
  }
}

TEST(SketchProject, ConfigValidation) {
  const auto p = oracle::system(oracle::random_spd(4, 1), oracle::random_vector(4, 2));
  auto c = config(rs::SketchKind::subsample, 2, 0);
  c.step_size = 0.0;
  EXPECT_THROW(rs::solve_sketch_project(p, c), rs::InputError);
  c = config(rs::SketchKind::subsample, 2, 0, 10, 0.0);
  EXPECT_THROW(rs::solve_sketch_project(p, c), rs::InputError);
  c = config(rs::SketchKind::subsample, 5, 0);
  EXPECT_THROW(rs::solve_sketch_project(p, c), rs::InputError);
}

TEST(SketchProject, DivergenceGuardReportsLastFiniteIterate) {
  const auto p = oracle::system(oracle::random_spd(6, 1), oracle::random_vector(6, 2));
  auto c = config(rs::SketchKind::subsample, 1, 0);
  c.divergence_threshold = 1e-300;
  try {
    rs::solve_sketch_project(p, c);
    FAIL() << "expected divergence";
  } catch (const rs::DivergenceError& e) {
    EXPECT_EQ(e.iteration(), 1u);
    EXPECT_EQ(e.last_finite_iterate(), rs::Vector::Zero(6));
  }
}

TEST(SketchProject, ResidualRefresh) {
  const auto p = oracle::system(oracle::random_spd(20, 1), oracle::random_vector(20, 2));
  auto c = config(rs::SketchKind::count, 4, 3, 50, 1e-14);
  c.residual_refresh_every = 10;
  const auto rep = rs::solve_sketch_project(p, c);
  EXPECT_EQ(rep.refreshed_at, (std::vector<std::size_t>{10, 20, 30, 40, 50}));
}

TEST(Momentum, NoneIsBitwisePlain) {
  const auto p = oracle::system(oracle::random_spd(25, 1), oracle::random_vector(25, 2));
  for (auto kind : rs::kAllSketchKinds) {
    Recorded plain, mom;
    rs::solve_sketch_project(p, recording(config(kind, 5, 8), plain));
    rs::solve_momentum(p, recording(config(kind, 5, 8), mom), rs::MomentumSchedule::none());
    EXPECT_EQ(max_diff(plain.iterates, mom.iterates), 0.0) << rs::to_string(kind);
  }
}

TEST(Momentum, EveryScheduleConverges) {
  const auto p = oracle::system(oracle::random_spd(30, 4), oracle::random_vector(30, 5));
  for (const char* name : {"none", "constant", "increasing", "heuristic"}) {
    const auto rep = rs::solve_momentum(p, config(rs::SketchKind::subsample, 6, 1, 20000), *rs::schedule_from_name(name));
    EXPECT_TRUE(rep.converged) << name;
  }
}

TEST(AveragingForm, MatchesHeavyBallConstantEta) {
  const auto p = oracle::system(oracle::random_spd(10, 3), oracle::random_vector(10, 4));
  for (double eta : {0.3, 0.5, 0.9}) {
    Recorded hb, av;
    const auto c = config(rs::SketchKind::subsample, 2, 5, 50, 1e-14);
    rs::solve_momentum(p, recording(c, hb), rs::MomentumSchedule::theoretical_constant(eta));
    rs::solve_momentum_averaging_form(p, recording(c, av), [eta](std::size_t) { return eta; });
    EXPECT_LE(max_diff(hb.iterates, av.iterates), 1e-10) << eta;
  }
}

TEST(AveragingForm, MatchesHeavyBallArbitrarySequence) {
  const auto p = oracle::system(oracle::random_spd(12, 5), oracle::random_vector(12, 6));
  std::vector<double> etas;
  rs::Rng rng(1);
  for (int i = 0; i < 100; ++i) etas.push_back(0.05 + 0.95 * rng.uniform());
  for (auto kind : rs::kAllSketchKinds) {
    Recorded hb, av;
    const auto c = config(kind, 3, 7, 80, 1e-14);
    rs::solve_momentum(p, recording(c, hb), rs::MomentumSchedule::theoretical_sequence(etas));
    rs::solve_momentum_averaging_form(p, recording(c, av),
                                      [&](std::size_t j) { return etas[std::min(j, etas.size() - 1)]; });
    EXPECT_LE(max_diff(hb.iterates, av.iterates), 1e-10) << rs::to_string(kind);
  }
}

TEST(AveragingForm, EtaOneIsPlain) {
  const auto p = oracle::system(oracle::random_spd(10, 3), oracle::random_vector(10, 4));
  Recorded plain, av;
  const auto c = config(rs::SketchKind::gaussian, 3, 2, 40, 1e-14);
  rs::solve_sketch_project(p, recording(c, plain));
  rs::solve_momentum_averaging_form(p, recording(c, av), [](std::size_t) { return 1.0; });
  EXPECT_LE(max_diff(plain.iterates, av.iterates), 1e-12);
}

TEST(Accelerated, UnitParametersArePlain) {
  const auto p = oracle::system(oracle::random_spd(20, 3), oracle::random_vector(20, 4));
  for (auto kind : rs::kAllSketchKinds) {
    Recorded plain, acc;
    const auto c = config(kind, 4, 6, 300);
    const auto a = rs::solve_sketch_project(p, recording(c, plain));
    const auto b = rs::solve_accelerated(p, recording(c, acc), {1.0, 1.0});
    EXPECT_LE(max_diff(plain.iterates, acc.iterates), 1e-12) << rs::to_string(kind);
    EXPECT_EQ(a.iterations, b.iterations);
  }
}

TEST(Accelerated, MaintainedResidualTracksExact) {
  const auto p = oracle::system(oracle::random_spd(50, 3), oracle::random_vector(50, 4));
  Recorded rec;
  rs::solve_accelerated(p, recording(config(rs::SketchKind::subsample, 5, 1, 100, 1e-14), rec), {0.05, 10.0});
  ASSERT_EQ(rec.iterates.size(), 101u);
  for (std::size_t k = 0; k < rec.iterates.size(); ++k) {
    EXPECT_LE((rec.residuals[k] - (p.a * rec.iterates[k] - p.b)).norm(), 1e-8);
  }
}

TEST(Accelerated, SingleRowParametersConverge) {
  Eigen::MatrixXd a = oracle::random_spd(10, 8, 0.0) * 0.1;
  for (int i = 0; i < 10; ++i) a(i, i) += 2.0 + 0.1 * i;
  const auto p = oracle::system(a, oracle::random_vector(10, 9));
  const double lmin = oracle::min_eigenvalue(a);
  const double mu = lmin / a.trace();
  const double nu = a.trace() / a.diagonal().minCoeff();
  const auto rep = rs::solve_accelerated(p, config(rs::SketchKind::subsample, 1, 3, 10000), {mu, nu});
  EXPECT_TRUE(rep.converged);
}

TEST(Accelerated, RejectsInfeasibleParameters) {
  const auto p = oracle::system(oracle::random_spd(4, 3), oracle::random_vector(4, 4));
  const auto c = config(rs::SketchKind::subsample, 1, 0);
  EXPECT_THROW(rs::solve_accelerated(p, c, {0.5, 3.0}), rs::InputError);
  EXPECT_THROW(rs::solve_accelerated(p, c, {0.0, 1.0}), rs::InputError);
  EXPECT_THROW(rs::solve_accelerated(p, c, {0.5, 0.5}), rs::InputError);
}

TEST(CoordinateSampler, Probabilities) {
  const auto uniform = rs::coordinate_sampler(rs::DenseMatrix(rs::DenseMatrix::Identity(4, 4)));
  for (double q : uniform.probabilities()) EXPECT_DOUBLE_EQ(q, 0.25);
  rs::DenseMatrix d = rs::DenseMatrix::Zero(2, 2);
  d(0, 0) = 1;
  d(1, 1) = 3;
  const auto s = rs::coordinate_sampler(d);
  EXPECT_DOUBLE_EQ(s.probabilities()[0], 0.25);
  EXPECT_DOUBLE_EQ(s.probabilities()[1], 0.75);
  rs::Rng rng(123);
  int ones = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ones += s.sample(rng) == 1 ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(ones) / n, 0.75, 0.01 * 0.75);
  d(0, 0) = 0.0;
  EXPECT_THROW(rs::coordinate_sampler(d), rs::InputError);
}

TEST(CdMomentum, MatchesGenericSolverWithCoordinateSketches) {
  const auto a = oracle::random_spd(15, 2);
  const auto p = oracle::system(a, oracle::random_vector(15, 3));
  const auto sampler = rs::coordinate_sampler(p.a);
  for (const auto& sched : {rs::MomentumSchedule::none(), rs::MomentumSchedule::theoretical_constant(0.5),
                            rs::MomentumSchedule::heuristic()}) {
    Recorded cd, generic;
    const auto c = config(rs::SketchKind::subsample, 1, 4, 300, 1e-14);
    rs::solve_cd_momentum(p, recording(c, cd), sched);
    rs::solve_momentum(p, recording(c, generic), sched, sampler.as_sketch_source());
    EXPECT_LE(max_diff(cd.iterates, generic.iterates), 1e-12);
    EXPECT_LE(max_diff(cd.residuals, generic.residuals), 1e-12);
  }
  const auto sparse = rs::make_system(oracle::to_csr(a), p.b);
  Recorded cd_dense, cd_sparse;
  const auto c = config(rs::SketchKind::subsample, 1, 4, 200, 1e-14);
  rs::solve_cd_momentum(p, recording(c, cd_dense), rs::MomentumSchedule::constant());
  rs::solve_cd_momentum(sparse, recording(c, cd_sparse), rs::MomentumSchedule::constant());
  EXPECT_LE(max_diff(cd_dense.iterates, cd_sparse.iterates), 1e-12);
}

TEST(CdMomentum, TrivialCases) {
  const auto one = oracle::system(Eigen::MatrixXd::Constant(1, 1, 4.0), rs::Vector::Constant(1, 2.0));
  const auto r1 = rs::solve_cd_momentum(one, config(rs::SketchKind::subsample, 1, 0, 10, 1e-12),
                                        rs::MomentumSchedule::none());
  EXPECT_EQ(r1.iterations, 1u);
  EXPECT_DOUBLE_EQ(r1.solution(0), 0.5);

  const auto diag = oracle::system(2.0 * Eigen::MatrixXd::Identity(2, 2), rs::Vector::Constant(2, 2.0));
  Recorded rec;
  rs::solve_cd_momentum(diag, recording(config(rs::SketchKind::subsample, 1, 3, 10, 1e-12), rec),
                        rs::MomentumSchedule::none());
  for (std::size_t k = 1; k < rec.residuals.size(); ++k) {
    const auto zeros = (rec.residuals[k].array() == 0.0).count();
    EXPECT_GE(zeros, std::min<long>(static_cast<long>(k), 1));
  }
  EXPECT_EQ(rec.residuals.back(), rs::Vector::Zero(2));
}

TEST(ResidualFidelity, AllSolversAfterLongRuns) {
  const auto p = oracle::system(oracle::random_spd(100, 5), oracle::random_vector(100, 6));
  auto check = [&](const Recorded& rec, const std::string& what) {
    const rs::Vector fresh = p.a * rec.iterates.back() - p.b;
    EXPECT_LE((rec.residuals.back() - fresh).norm(), 1e-8 * p.b.norm()) << what;
  };
  for (auto kind : rs::kAllSketchKinds) {
    const auto c = config(kind, 10, 1, 1000, 1e-300);
    Recorded plain, heavy, avg, acc;
    rs::solve_sketch_project(p, recording(c, plain));
    rs::solve_momentum(p, recording(c, heavy), rs::MomentumSchedule::heuristic());
    rs::solve_momentum_averaging_form(p, recording(c, avg), [](std::size_t) { return 0.7; });
    rs::solve_accelerated(p, recording(c, acc), {0.01, 20.0});
    const std::string name(rs::to_string(kind));
    check(plain, name + " plain");
    check(heavy, name + " heavy ball");
    check(avg, name + " averaging");
    check(acc, name + " accelerated");
  }
  Recorded cd;
  rs::solve_cd_momentum(p, recording(config(rs::SketchKind::subsample, 1, 1, 1000, 1e-300), cd),
                        rs::MomentumSchedule::constant());
  check(cd, "cd");
}

TEST(Cg, Identity) {
  const auto p = oracle::system(Eigen::MatrixXd::Identity(5, 5), oracle::random_vector(5, 1));
  const auto rep = rs::solve_cg(p, config(rs::SketchKind::subsample, 1, 0));
  EXPECT_EQ(rep.iterations, 1u);
  EXPECT_LT((rep.solution - p.b).norm(), 1e-15);
}

TEST(Cg, MatchesDirect) {
  const auto a = oracle::random_spd(50, 7);
  const auto p = oracle::system(a, oracle::random_vector(50, 8));
  const auto rep = rs::solve_cg(p, config(rs::SketchKind::subsample, 1, 0, 1000, 1e-10));
  EXPECT_TRUE(rep.converged);
  EXPECT_LE(rep.residual_trace.back(), 1e-10);
  EXPECT_LT((rep.solution - rs::solve_direct(p)).norm(), 1e-8);
  const auto sparse = rs::make_system(oracle::to_csr(a), p.b);
  EXPECT_LT((rs::solve_cg(sparse, config(rs::SketchKind::subsample, 1, 0, 1000, 1e-10)).solution - rep.solution).norm(),
            1e-10);
}

TEST(Cg, ThreeDistinctEigenvalues) {
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(oracle::random_matrix(30, 30, 3)).householderQ();
  rs::Vector lambda(30);
  for (int i = 0; i < 30; ++i) lambda(i) = i % 3 == 0 ? 1.0 : (i % 3 == 1 ? 5.0 : 20.0);
  Eigen::MatrixXd a = q * lambda.asDiagonal() * q.transpose();
  a = 0.5 * (a + a.transpose());
  const auto rep = rs::solve_cg(oracle::system(a, oracle::random_vector(30, 4)),
                                config(rs::SketchKind::subsample, 1, 0, 100, 1e-10));
  EXPECT_TRUE(rep.converged);
  EXPECT_LE(rep.iterations, 5u);
}

TEST(Direct, Cases) {
  const auto b = oracle::random_vector(4, 1);
  EXPECT_LT((rs::solve_direct(oracle::system(Eigen::MatrixXd::Identity(4, 4), b)) - b).norm(), 1e-15);
  const rs::Vector d = (rs::Vector(4) << 1, 2, 4, 8).finished();
  const rs::Vector w = rs::solve_direct(oracle::system(d.asDiagonal().toDenseMatrix(), b));
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(w(i), b(i) / d(i), 1e-15);
  const auto p = oracle::system(oracle::random_spd(100, 2), oracle::random_vector(100, 3));
  EXPECT_LE((p.a * rs::solve_direct(p) - p.b).norm() / p.b.norm(), 1e-10);
  const auto sp = rs::make_system(oracle::to_csr(p.a), p.b);
  EXPECT_LE((p.a * rs::solve_direct(sp) - p.b).norm() / p.b.norm(), 1e-10);
}

TEST(AveragedIterates, RunningMean) {
  const auto p = oracle::system(Eigen::MatrixXd::Identity(2, 2), rs::Vector::Ones(2));
  const std::vector<rs::Vector> iterates{rs::Vector::Zero(2), 2.0 * rs::Vector::Ones(2)};
  const auto res = rs::averaged_iterate_residuals(p, iterates);
  ASSERT_EQ(res.size(), 2u);
  EXPECT_DOUBLE_EQ(res[0], 1.0);
  EXPECT_DOUBLE_EQ(res[1], 0.0);
}
