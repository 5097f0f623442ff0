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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ridgesketch/bench/benchmark.hpp"
#include "test_support.hpp"

namespace rs = ridgesketch;
namespace rb = ridgesketch::bench;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ridgesketch_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_files(const fs::path& dir, const std::string& prefix) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().filename().string().rfind(prefix, 0) == 0) ++n;
  }
  return n;
}

rb::BenchConfig small_config(const fs::path& out) {
  rb::BenchConfig c;
  c.source = rb::ProblemSource::sparse;
  c.n = 120;
  c.d = 40;
  c.density = 0.3;
  c.lambda = 0.1;
  c.tau = 8;
  c.out_dir = out.string();
  c.quiet = true;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RIDGESKETCH_BENCH_EXE) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Synthetic, ShapesAndDensity) {
  const auto dense = rb::generate_synthetic(rb::SyntheticKind::dense, 30, 7, 1.0, 1);
  EXPECT_EQ(dense.n(), 30u);
  EXPECT_EQ(dense.d(), 7u);
  const auto full = rb::generate_synthetic(rb::SyntheticKind::sparse, 30, 7, 1.0, 1);
  EXPECT_EQ(std::get<rs::CsrMatrix>(full.x).nonZeros(), 30 * 7);
  const auto sparse = rb::generate_synthetic(rb::SyntheticKind::sparse, 2000, 500, 0.25, 3);
  const double nnz = static_cast<double>(std::get<rs::CsrMatrix>(sparse.x).nonZeros());
  EXPECT_NEAR(nnz, 0.25 * 2000 * 500, 0.02 * 0.25 * 2000 * 500);
  EXPECT_EQ(sparse.y.size(), 2000);
}

TEST(Synthetic, Deterministic) {
  const auto a = rb::generate_synthetic(rb::SyntheticKind::sparse, 50, 20, 0.3, 9);
  const auto b = rb::generate_synthetic(rb::SyntheticKind::sparse, 50, 20, 0.3, 9);
  EXPECT_EQ(rs::to_dense(std::get<rs::CsrMatrix>(a.x)), rs::to_dense(std::get<rs::CsrMatrix>(b.x)));
  EXPECT_EQ(a.y, b.y);
  EXPECT_THROW(rb::generate_synthetic(rb::SyntheticKind::sparse, 5, 5, 0.0, 1), rs::InputError);
}

TEST(Csv, ParsesPlainAndHeader) {
  std::istringstream plain("1,2,3\n4,5,6\n");
  const auto d = rb::parse_csv(plain);
  const auto& x = std::get<rs::DenseMatrix>(d.x);
  EXPECT_EQ(x, (rs::DenseMatrix(2, 2) << 1, 2, 4, 5).finished());
  EXPECT_EQ(d.y, (rs::Vector(2) << 3, 6).finished());
  std::istringstream header("a,b,t\n1,2,3\n4,5,6\n");
  EXPECT_EQ(std::get<rs::DenseMatrix>(rb::parse_csv(header).x), x);
}

TEST(Csv, Errors) {
  std::istringstream empty("");
  EXPECT_THROW(rb::parse_csv(empty), rs::ParseError);
  std::istringstream ragged("1,2,3\n4,5\n");
  try {
    rb::parse_csv(ragged);
    FAIL();
  } catch (const rs::ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::istringstream word("1,2,3\n4,x,6\n");
  try {
    rb::parse_csv(word);
    FAIL();
  } catch (const rs::ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(rb::load_csv("/nonexistent/file.csv"), rs::InputError);
}

TEST(TraceCsv, RoundTrip) {
  const std::vector<rb::TraceRecord> records{{0, "sketch", "count", "heuristic", 0, 1.0, 0.0},
                                             {0, "sketch", "count", "heuristic", 1, 0.123456789012345678, 1e-5},
                                             {3, "cg", "-", "-", 7, 1e-300, 12.5}};
  std::stringstream ss;
  rb::write_trace_csv(ss, records);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), rb::kTraceHeader);
  EXPECT_EQ(rb::parse_trace_csv(ss), records);
  std::istringstream bad("nope\n");
  EXPECT_THROW(rb::parse_trace_csv(bad), rs::ParseError);
}

TEST(Quantile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(rb::quantile({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(rb::quantile({1, 2, 3, 4, 5}, 0.25), 2.0);
  EXPECT_DOUBLE_EQ(rb::quantile({1, 2, 3, 4}, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(rb::quantile({7}, 0.75), 7.0);
}

TEST(TauRules, ExactIntegerArithmetic) {
  rb::BenchConfig c;
  c.tau_rule = rb::TauRule::quarter;
  EXPECT_EQ(rb::resolve_tau(c, 500), 125u);
  EXPECT_EQ(rb::resolve_tau(c, 3), 1u);
  c.tau_rule = rb::TauRule::two_thirds;
  EXPECT_EQ(rb::resolve_tau(c, 500), 63u);  // 62^3 < 500^2 <= 63^3
  EXPECT_EQ(rb::resolve_tau(c, 8), 4u);     // exact cube
  EXPECT_EQ(rb::resolve_tau(c, 1000), 100u);
  EXPECT_EQ(rb::resolve_tau(c, 1), 1u);
  c.tau = 7;
  EXPECT_EQ(rb::resolve_tau(c, 100), 7u);
  EXPECT_THROW(rb::resolve_tau(c, 5), rs::InputError);
}

TEST(RunBenchmark, DirectOnly) {
  const auto out = fresh_dir("direct");
  auto c = small_config(out);
  c.solvers = {"direct"};
  EXPECT_EQ(rb::run_benchmark(c), rb::kExitOk);
  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  ASSERT_EQ(summary["combinations"].size(), 1u);
  EXPECT_LT(summary["combinations"][0]["final_rel_residual"][0].get<double>(), 1e-10);
}

TEST(RunBenchmark, SketchesConvergeAndTracesAreWellFormed) {
  const auto out = fresh_dir("smoke");
  auto c = small_config(out);
  c.sketches = {"subsample", "count"};
  c.max_iter = 20000;
  EXPECT_EQ(rb::run_benchmark(c), rb::kExitOk);
  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  ASSERT_EQ(summary["combinations"].size(), 2u);
  for (const auto& entry : summary["combinations"]) {
    EXPECT_TRUE(entry["converged"][0].get<bool>());
    EXPECT_LE(entry["iterations"]["median"].get<double>(), 20000.0);
    EXPECT_GE(entry["seconds"]["median"].get<double>(), 0.0);
    ASSERT_FALSE(entry["certificate"].is_null());
    EXPECT_GT(entry["certificate"]["rho"].get<double>(), 0.0);
    const std::string file = "trace_sketch_" + entry["sketch"].get<std::string>() + "_none_rep0.csv";
    std::ifstream in(out / file);
    const auto records = rb::parse_trace_csv(in);
    ASSERT_FALSE(records.empty());
    EXPECT_EQ(records.front().iteration, 0u);
    EXPECT_LE(records.back().rel_residual, 1e-4);
  }
}

TEST(RunBenchmark, RepetitionsProduceQuartilesAndFiles) {
  const auto out = fresh_dir("reps");
  auto c = small_config(out);
  c.repetitions = 10;
  c.sketches = {"gaussian"};
  c.schedules = {"heuristic"};
  EXPECT_EQ(rb::run_benchmark(c), rb::kExitOk);
  EXPECT_EQ(count_files(out, "trace_sketch_gaussian_heuristic_rep"), 10u);
  const auto entry = nlohmann::json::parse(slurp(out / "summary.json"))["combinations"][0];
  for (const char* q : {"q1", "median", "q3"}) {
    EXPECT_TRUE(entry["iterations"].contains(q));
    EXPECT_TRUE(entry["seconds"].contains(q));
  }
  EXPECT_LE(entry["iterations"]["q1"].get<double>(), entry["iterations"]["q3"].get<double>());
  EXPECT_EQ(entry["converged"].size(), 10u);
}

TEST(RunBenchmark, SrhtRunsOnPaddedSystem) {
  const auto out = fresh_dir("srht");
  auto c = small_config(out);
  c.sketches = {"srht"};
  EXPECT_EQ(rb::run_benchmark(c), rb::kExitOk);
  const auto entry = nlohmann::json::parse(slurp(out / "summary.json"))["combinations"][0];
  EXPECT_EQ(entry["m"].get<std::size_t>(), 64u);
  EXPECT_TRUE(entry["converged"][0].get<bool>());
}

TEST(RunBenchmark, Deterministic) {
  const auto a = fresh_dir("det_a");
  const auto b = fresh_dir("det_b");
  auto c = small_config(a);
  c.sketches = {"count", "srht"};
  c.schedules = {"none", "heuristic"};
  c.repetitions = 2;
  rb::run_benchmark(c);
  c.out_dir = b.string();
  rb::run_benchmark(c);
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().extension() != ".csv") continue;
    std::ifstream fa(e.path()), fb(b / e.path().filename());
    auto ra = rb::parse_trace_csv(fa);
    auto rb_ = rb::parse_trace_csv(fb);
    ASSERT_EQ(ra.size(), rb_.size());
    for (std::size_t i = 0; i < ra.size(); ++i) {
      ra[i].seconds = rb_[i].seconds = 0.0;
      EXPECT_EQ(ra[i], rb_[i]);
    }
  }
}

TEST(RunBenchmark, AllRunsDivergingGivesExitThree) {
  const auto out = fresh_dir("diverge");
  auto c = small_config(out);
  c.repetitions = 2;
  c.divergence_threshold = 1e-300;  // every sketch step trips the guard
  EXPECT_EQ(rb::run_benchmark(c), rb::kExitAllDiverged);
  const auto entry = nlohmann::json::parse(slurp(out / "summary.json"))["combinations"][0];
  EXPECT_TRUE(entry["diverged"][0].get<bool>());
  EXPECT_TRUE(entry["diverged"][1].get<bool>());
  EXPECT_TRUE(entry["iterations"].is_null());
}

TEST(RunBenchmark, RejectsBadConfig) {
  auto c = small_config(fresh_dir("bad"));
  c.sketches = {"fourier"};
  EXPECT_THROW(rb::run_benchmark(c), rs::InputError);
  c = small_config(fresh_dir("bad"));
  c.source = rb::ProblemSource::csv;
  EXPECT_THROW(rb::run_benchmark(c), rs::InputError);
}

TEST(GridSearch, WritesOneRowPerPair) {
  const auto out = fresh_dir("grid");
  auto c = small_config(out);
  c.source = rb::ProblemSource::dense;
  c.n = 400;
  c.d = 200;
  c.route = rb::RouteChoice::primal;
  c.max_iter = 3000;
  c.tau = 20;
  EXPECT_EQ(rb::grid_search_accel(c, {1.0, 0.1, 0.01}, {1.0, 5.0, 50.0}), rb::kExitOk);
  std::ifstream in(out / "accel_grid.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, rb::kGridHeader);
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 9u);
  EXPECT_NE(rows[0].find(",ok"), std::string::npos);          // (1, 1)
  EXPECT_NE(rows[1].find("infeasible"), std::string::npos);  // (1, 5)
  EXPECT_NE(rows[2].find("infeasible"), std::string::npos);  // (1, 50)
  EXPECT_NE(rows[5].find("infeasible"), std::string::npos);  // (0.1, 50)
  EXPECT_EQ(rows[8].find("infeasible"), std::string::npos);  // (0.01, 50): mu nu = 0.5
}

TEST(Cli, ExitCodes) {
  const auto out = fresh_dir("cli");
  EXPECT_EQ(run_cli("--problem sparse --n 80 --d 30 --tau 5 --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "summary.json"));
  EXPECT_EQ(run_cli("--sketch fourier"), 2);
  EXPECT_EQ(run_cli("--tau 4 --tau-rule m4"), 2);
  EXPECT_EQ(run_cli("--problem csv --csv /nonexistent.csv"), 2);
  EXPECT_EQ(run_cli("--not-a-flag"), 2);
  EXPECT_EQ(run_cli("accel-grid --mu-grid 1,0.5 --nu-grid 1,2 --problem dense --n 60 --d 20 --tau 4 --out " +
                    (out / "grid").string()),
            0);
  EXPECT_TRUE(fs::exists(out / "grid" / "accel_grid.csv"));
}
