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
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ridgesketch/bench/data.hpp"
#include "ridgesketch/bench/trace_io.hpp"
#include "ridgesketch/problem.hpp"
#include "ridgesketch/schedules.hpp"
#include "ridgesketch/sketches.hpp"
#include "ridgesketch/solvers.hpp"
#include "ridgesketch/theory.hpp"

namespace ridgesketch::bench {

enum class ProblemSource { dense, sparse, csv };
enum class RouteChoice { automatic, primal, dual, kernel };
enum class TauRule { quarter, two_thirds };  // floor(m/4), ceil(m^{2/3})

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitAllDiverged = 3;

struct BenchConfig {
  ProblemSource source = ProblemSource::dense;
  std::size_t n = 1000;
  std::size_t d = 100;
  double density = 0.25;
  std::string csv_path;
  RouteChoice route = RouteChoice::automatic;
  double sigma = 1.0;
  double lambda = 1e-3;
  std::vector<std::string> solvers{"sketch"};
  std::vector<std::string> sketches{"subsample"};
  std::vector<std::string> schedules{"none"};
  std::optional<std::size_t> tau;
  TauRule tau_rule = TauRule::quarter;
  double tolerance = 1e-4;
  std::size_t max_iter = 1000;
  std::size_t repetitions = 1;
  double divergence_threshold = 1e8;
  std::uint64_t seed = 0;
  std::string out_dir = "bench_out";
  bool quiet = false;

  void validate() const {
    if (source == ProblemSource::csv && csv_path.empty()) throw InputError("--csv PATH is required for --problem csv");
    if (source != ProblemSource::csv && (n < 1 || d < 1)) throw InputError("--n and --d must be >= 1");
    if (!(density > 0.0 && density <= 1.0)) throw InputError("density must lie in (0, 1]");
    if (repetitions < 1) throw InputError("repetitions must be >= 1");
    if (!(tolerance > 0.0)) throw InputError("tolerance must be > 0");
    if (!(lambda >= 0.0)) throw InputError("lambda must be >= 0");
    if (route == RouteChoice::kernel && !(sigma > 0.0)) throw InputError("sigma must be > 0");
    if (solvers.empty()) throw InputError("at least one solver is required");
    for (const auto& s : solvers) {
      if (s != "sketch" && s != "cg" && s != "direct") throw InputError("unknown solver: " + s);
    }
    for (const auto& s : sketches) {
      if (!parse_sketch_kind(s)) throw InputError("unknown sketch: " + s);
    }
    for (const auto& s : schedules) {
      if (!schedule_from_name(s)) throw InputError("unknown momentum schedule: " + s);
    }
    if (tau && *tau < 1) throw InputError("tau must be >= 1");
  }
};

/// Sketch size for an m-dimensional system: the absolute override, or
/// floor(m/4) / ceil(m^{2/3}) clamped to [1, m].
inline std::size_t resolve_tau(const BenchConfig& c, std::size_t m) {
  if (c.tau) {
    if (*c.tau > m) throw InputError("tau = " + std::to_string(*c.tau) + " exceeds m = " + std::to_string(m));
    return *c.tau;
  }
  std::size_t t = 0;
  if (c.tau_rule == TauRule::quarter) {
    t = m / 4;
  } else {
    // smallest t with t^3 >= m^2, computed exactly
    const auto m2 = static_cast<unsigned long long>(m) * m;
    t = static_cast<std::size_t>(std::cbrt(static_cast<double>(m2)));
    while (t > 0 && static_cast<unsigned long long>(t) * t * t >= m2) --t;
    while (static_cast<unsigned long long>(t) * t * t < m2) ++t;
  }
  return std::clamp<std::size_t>(t, 1, m);
}

/// Linear-interpolation quantile of unsorted data, q in [0, 1].
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

using AnyProblem = std::variant<RidgeProblem<DenseMatrix>, RidgeProblem<CsrMatrix>>;

inline Dataset load_dataset(const BenchConfig& c) {
  switch (c.source) {
    case ProblemSource::dense: return generate_synthetic(SyntheticKind::dense, c.n, c.d, 1.0, c.seed);
    case ProblemSource::sparse: return generate_synthetic(SyntheticKind::sparse, c.n, c.d, c.density, c.seed);
    case ProblemSource::csv: return load_csv(c.csv_path);
  }
  throw InputError("unknown problem source");
}

inline AnyProblem build_problem(const BenchConfig& c, const Dataset& data) {
  return std::visit(
      [&](const auto& x) -> AnyProblem {
        switch (c.route) {
          case RouteChoice::automatic: return auto_select(x, data.y, c.lambda);
          case RouteChoice::primal: return build_primal(x, data.y, c.lambda);
          case RouteChoice::dual: return build_dual(x, data.y, c.lambda);
          case RouteChoice::kernel: return build_kernel(x, data.y, c.lambda, c.sigma);
        }
        throw InputError("unknown route");
      },
      data.x);
}

inline std::string to_string(ProblemSource s) {
  switch (s) {
    case ProblemSource::dense: return "dense";
    case ProblemSource::sparse: return "sparse";
    case ProblemSource::csv: return "csv";
  }
  return "?";
}

namespace detail {

struct RunOutcome {
  SolveReport report;
  bool diverged = false;
  std::string error;
};

struct Combination {
  std::string solver;
  std::string sketch = "-";
  std::string schedule = "-";
};

inline std::vector<Combination> combinations(const BenchConfig& c) {
  std::vector<Combination> out;
  for (const auto& solver : c.solvers) {
    if (solver == "sketch") {
      for (const auto& sk : c.sketches) {
        for (const auto& sc : c.schedules) out.push_back({solver, sk, sc});
      }
    } else {
      out.push_back({solver});
    }
  }
  return out;
}

template <SystemMatrix M>
RunOutcome run_one(const RidgeProblem<M>& p, const Combination& combo, const SolverConfig& sc) {
  RunOutcome out;
  try {
    if (combo.solver == "direct") {
      ridgesketch::detail::Stopwatch clock;
      Vector w = solve_direct(p);
      const double norm0 = p.b.norm();
      const double rel = norm0 > 0.0 ? ridgesketch::detail::residual(p, w).norm() / norm0 : 0.0;
      out.report.residual_trace = {1.0, rel};
      out.report.wall_times = {0.0, clock.seconds()};
      out.report.iterations = 1;
      out.report.converged = rel <= sc.tolerance;
      out.report.solution = std::move(w);
    } else if (combo.solver == "cg") {
      out.report = solve_cg(p, sc);
    } else {
      out.report = solve_momentum(p, sc, *schedule_from_name(combo.schedule));
    }
  } catch (const DivergenceError& e) {
    out.diverged = true;
    out.error = e.what();
  }
  return out;
}

inline std::string combo_file(const Combination& c, std::size_t rep) {
  return "trace_" + c.solver + "_" + (c.sketch == "-" ? "none" : c.sketch) + "_" +
         (c.schedule == "-" ? "none" : c.schedule) + "_rep" + std::to_string(rep) + ".csv";
}

inline nlohmann::json quartile_json(const std::vector<double>& v) {
  if (v.empty()) return nullptr;
  return {{"q1", quantile(v, 0.25)}, {"median", quantile(v, 0.5)}, {"q3", quantile(v, 0.75)}};
}

inline nlohmann::json certificate_json(const RateCertificate& c) {
  nlohmann::json j = {{"rho", c.rho},
                      {"lambda_min_EH", c.lambda_min_eh},
                      {"trace_A", c.trace_a},
                      {"lambda_min_A", c.lambda_min_a},
                      {"lambda_max_A", c.lambda_max_a},
                      {"kappa", c.kappa},
                      {"estimated", c.estimated}};
  if (c.estimated) j["standard_error"] = c.standard_error;
  if (c.accel) {
    j["mu"] = c.accel->mu;
    j["nu"] = c.accel->nu;
    j["accel_rank_deficient"] = c.accel_rank_deficient;
  }
  return j;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

inline nlohmann::json config_json(const BenchConfig& c) {
  nlohmann::json j = {{"problem", to_string(c.source)},
                      {"n", c.n},
                      {"d", c.d},
                      {"density", c.density},
                      {"sigma", c.sigma},
                      {"lambda", c.lambda},
                      {"solvers", c.solvers},
                      {"sketches", c.sketches},
                      {"schedules", c.schedules},
                      {"tol", c.tolerance},
                      {"max_iter", c.max_iter},
                      {"reps", c.repetitions},
                      {"seed", c.seed}};
  if (c.source == ProblemSource::csv) j["csv"] = c.csv_path;
  if (c.tau) {
    j["tau"] = *c.tau;
  } else {
    j["tau_rule"] = c.tau_rule == TauRule::quarter ? "m4" : "m23";
  }
  return j;
}

// Problem actually handed to a combination: SRHT runs on the padded system.
struct Prepared {
  AnyProblem problem;
  std::size_t original_m;
  double setup_seconds;
};

inline Prepared prepare_for(const AnyProblem& base, const Combination& combo) {
  ridgesketch::detail::Stopwatch clock;
  if (combo.solver == "sketch" && combo.sketch == "srht") {
    return std::visit(
        [&](const auto& p) -> Prepared {
          auto padded = pad_to_power_of_two(p);
          return {AnyProblem(std::move(padded.problem)), padded.original_m, clock.seconds()};
        },
        base);
  }
  return {base, std::visit([](const auto& p) { return p.m(); }, base), 0.0};
}

}  // namespace detail

/// Runs the solver x sketch x schedule matrix. Writes one trace CSV per
/// (combination, repetition) and summary.json into config.out_dir.
/// Repetition r uses seed config.seed + r.
inline int run_benchmark(const BenchConfig& config) {
  config.validate();
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);

  ridgesketch::detail::Stopwatch setup_clock;
  const Dataset data = load_dataset(config);
  const AnyProblem problem = build_problem(config, data);
  const double setup_seconds = setup_clock.seconds();
  const std::size_t m = std::visit([](const auto& p) { return p.m(); }, problem);
  const Route route = std::visit([](const auto& p) { return p.route; }, problem);

  nlohmann::json summary;
  summary["config"] = detail::config_json(config);
  summary["metadata"] = {{"generated_at", detail::utc_timestamp()}};
  summary["problem"] = {{"n", data.n()},         {"d", data.d()},          {"m", m},
                        {"route", to_string(route)}, {"lambda", config.lambda}, {"setup_seconds", setup_seconds}};
  if (route == Route::kernel) summary["problem"]["sigma"] = config.sigma;

  bool some_combo_all_diverged = false;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& combo : detail::combinations(config)) {
    const detail::Prepared prep = detail::prepare_for(problem, combo);
    const std::size_t pm = std::visit([](const auto& p) { return p.m(); }, prep.problem);
    SolverConfig sc;
    sc.tolerance = config.tolerance;
    sc.max_iter = config.max_iter;
    sc.divergence_threshold = config.divergence_threshold;
    std::optional<std::size_t> tau;
    if (combo.solver == "sketch") {
      tau = resolve_tau(config, prep.original_m);
      sc.sketch = {*parse_sketch_kind(combo.sketch), *tau};
    }

    std::vector<double> iterations;
    std::vector<double> seconds;
    nlohmann::json converged = nlohmann::json::array();
    nlohmann::json diverged = nlohmann::json::array();
    nlohmann::json final_residuals = nlohmann::json::array();
    std::size_t n_diverged = 0;
    for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
      sc.seed = config.seed + rep;
      const detail::RunOutcome run =
          std::visit([&](const auto& p) { return detail::run_one(p, combo, sc); }, prep.problem);
      std::vector<TraceRecord> records;
      for (std::size_t k = 0; k < run.report.residual_trace.size(); ++k) {
        records.push_back({rep, combo.solver, combo.sketch, combo.schedule, k, run.report.residual_trace[k],
                           run.report.wall_times[k]});
      }
      std::ofstream out(fs::path(config.out_dir) / detail::combo_file(combo, rep));
      write_trace_csv(out, records);

      diverged.push_back(run.diverged);
      if (run.diverged) {
        ++n_diverged;
        converged.push_back(false);
        final_residuals.push_back(nullptr);
        continue;
      }
      converged.push_back(run.report.converged);
      final_residuals.push_back(run.report.residual_trace.back());
      iterations.push_back(static_cast<double>(run.report.iterations));
      seconds.push_back(run.report.wall_times.back());
    }
    if (n_diverged == config.repetitions) some_combo_all_diverged = true;

    nlohmann::json entry = {{"solver", combo.solver},
                            {"sketch", combo.sketch},
                            {"schedule", combo.schedule},
                            {"runs", config.repetitions},
                            {"converged", converged},
                            {"diverged", diverged},
                            {"final_rel_residual", final_residuals},
                            {"iterations", detail::quartile_json(iterations)},
                            {"seconds", detail::quartile_json(seconds)},
                            {"setup_seconds", prep.setup_seconds},
                            {"m", pm}};
    entry["tau"] = tau ? nlohmann::json(*tau) : nlohmann::json(nullptr);
    entry["certificate"] = nullptr;
    if (combo.solver == "sketch" && pm <= kOracleMaxDim) {
      entry["certificate"] = detail::certificate_json(
          std::visit([&](const auto& p) { return certify(p.a, sc.sketch, 200, config.seed); }, prep.problem));
    }
    entries.push_back(std::move(entry));
    if (!config.quiet) {
      std::cout << combo.solver << " " << combo.sketch << " " << combo.schedule << ": " << config.repetitions - n_diverged
                << "/" << config.repetitions << " runs finished\n";
    }
  }
  summary["combinations"] = std::move(entries);
  std::ofstream(fs::path(config.out_dir) / "summary.json") << summary.dump(2) << '\n';
  return some_combo_all_diverged ? kExitAllDiverged : kExitOk;
}

inline constexpr const char* kGridHeader = "mu,nu,mean_seconds,converged_fraction,status";

/// Accelerated runs over a (mu, nu) grid using the first configured sketch.
/// Writes accel_grid.csv with one row per pair; pairs outside
/// 0 < mu <= 1/nu <= 1 are marked infeasible, pairs where no run converged
/// are marked timeout.
inline int grid_search_accel(const BenchConfig& config, const std::vector<double>& mu_grid,
                             const std::vector<double>& nu_grid) {
  config.validate();
  if (mu_grid.empty() || nu_grid.empty()) throw InputError("mu and nu grids must be non-empty");
  if (config.sketches.empty()) throw InputError("a sketch is required for the accelerated solver");
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);

  const Dataset data = load_dataset(config);
  const AnyProblem base = build_problem(config, data);
  const detail::Combination combo{"sketch", config.sketches.front(), "-"};
  const detail::Prepared prep = detail::prepare_for(base, combo);

  SolverConfig sc;
  sc.tolerance = config.tolerance;
  sc.max_iter = config.max_iter;
  sc.divergence_threshold = config.divergence_threshold;
  sc.sketch = {*parse_sketch_kind(combo.sketch), resolve_tau(config, prep.original_m)};

  std::ofstream out(fs::path(config.out_dir) / "accel_grid.csv");
  out << kGridHeader << '\n';
  for (double mu : mu_grid) {
    for (double nu : nu_grid) {
      const AccelParams params{mu, nu};
      out << format_double(mu) << ',' << format_double(nu) << ',';
      if (!params.feasible()) {
        out << ",,infeasible\n";
        continue;
      }
      double total = 0.0;
      std::size_t converged = 0;
      for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
        sc.seed = config.seed + rep;
        try {
          const SolveReport r =
              std::visit([&](const auto& p) { return solve_accelerated(p, sc, params); }, prep.problem);
          if (r.converged) {
            ++converged;
            total += r.wall_times.back();
          }
        } catch (const DivergenceError&) {
        }
      }
      const double fraction = static_cast<double>(converged) / static_cast<double>(config.repetitions);
      if (converged == 0) {
        out << "," << format_double(fraction) << ",timeout\n";
      } else {
        out << format_double(total / static_cast<double>(converged)) << ',' << format_double(fraction) << ",ok\n";
      }
    }
  }
  return kExitOk;
}

}  // namespace ridgesketch::bench
