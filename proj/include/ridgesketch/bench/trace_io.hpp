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

#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "ridgesketch/bench/data.hpp"
#include "ridgesketch/errors.hpp"

namespace ridgesketch::bench {

struct TraceRecord {
  std::size_t run = 0;
  std::string solver;
  std::string sketch;
  std::string schedule;
  std::size_t iteration = 0;
  double rel_residual = 0.0;
  double seconds = 0.0;

  bool operator==(const TraceRecord&) const = default;
};

inline constexpr const char* kTraceHeader = "run,solver,sketch,schedule,iter,rel_residual,seconds";

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& records) {
  out << kTraceHeader << '\n';
  for (const auto& r : records) {
    out << r.run << ',' << r.solver << ',' << r.sketch << ',' << r.schedule << ',' << r.iteration << ','
        << format_double(r.rel_residual) << ',' << format_double(r.seconds) << '\n';
  }
}

inline std::vector<TraceRecord> parse_trace_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || detail::trim(line) != kTraceHeader) throw ParseError("missing trace header", line_no);
  std::vector<TraceRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() != 7) throw ParseError("expected 7 columns", line_no);
    TraceRecord r;
    double run = 0.0;
    double iter = 0.0;
    if (!detail::parse_double(cells[0], run) || !detail::parse_double(cells[4], iter) ||
        !detail::parse_double(cells[5], r.rel_residual) || !detail::parse_double(cells[6], r.seconds) || run < 0 ||
        iter < 0) {
      throw ParseError("malformed numeric field", line_no);
    }
    r.run = static_cast<std::size_t>(run);
    r.iteration = static_cast<std::size_t>(iter);
    r.solver = std::string(cells[1]);
    r.sketch = std::string(cells[2]);
    r.schedule = std::string(cells[3]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ridgesketch::bench
