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

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ridgesketch/errors.hpp"
#include "ridgesketch/linalg.hpp"
#include "ridgesketch/rng.hpp"

namespace ridgesketch::bench {

using DataMatrix = std::variant<DenseMatrix, CsrMatrix>;

struct Dataset {
  DataMatrix x;
  Vector y;

  std::size_t n() const {
    return std::visit([](const auto& m) { return rows(m); }, x);
  }
  std::size_t d() const {
    return std::visit([](const auto& m) { return cols(m); }, x);
  }
};

enum class SyntheticKind { dense, sparse };

/// Random regression data. Dense: X_ij ~ N(0, 1). Sparse: each entry is
/// kept with probability `density`, kept values ~ N(0, 1), stored as CSR.
/// y = X w + 0.01 e with w, e standard normal. Draw order: X (row-major),
/// then w, then e.
inline Dataset generate_synthetic(SyntheticKind kind, std::size_t n, std::size_t d, double density,
                                  std::uint64_t seed) {
  if (n < 1 || d < 1) throw InputError("synthetic data needs n, d >= 1");
  if (!(density > 0.0 && density <= 1.0)) throw InputError("density must lie in (0, 1]");
  Rng rng(seed);
  const auto rn = static_cast<Index>(n);
  const auto rd = static_cast<Index>(d);
  Dataset data;
  if (kind == SyntheticKind::dense) {
    DenseMatrix x(rn, rd);
    for (Index i = 0; i < rn; ++i) {
      for (Index j = 0; j < rd; ++j) x(i, j) = rng.normal();
    }
    data.x = std::move(x);
  } else {
    std::vector<int> offsets{0};
    std::vector<int> col_idx;
    std::vector<double> values;
    for (Index i = 0; i < rn; ++i) {
      for (Index j = 0; j < rd; ++j) {
        if (rng.uniform() < density) {
          col_idx.push_back(static_cast<int>(j));
          values.push_back(rng.normal());
        }
      }
      offsets.push_back(static_cast<int>(values.size()));
    }
    CsrMatrix x = Eigen::Map<const CsrMatrix>(rn, rd, static_cast<Index>(values.size()), offsets.data(),
                                              col_idx.data(), values.data());
    x.makeCompressed();
    data.x = std::move(x);
  }
  Vector w(rd);
  for (Index j = 0; j < rd; ++j) w(j) = rng.normal();
  data.y = std::visit([&](const auto& x) -> Vector { return x * w; }, data.x);
  for (Index i = 0; i < rn; ++i) data.y(i) += 0.01 * rng.normal();
  return data;
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view cell, double& out) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  if (cell.empty()) return false;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return ec == std::errc() && ptr == cell.data() + cell.size();
}

}  // namespace detail

/// Numeric CSV with the target in the last column. A first row that does
/// not parse as numbers is taken as a header.
inline Dataset parse_csv(std::istream& in) {
  std::vector<std::vector<double>> table;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    std::vector<double> row(cells.size());
    bool numeric = true;
    for (std::size_t c = 0; c < cells.size(); ++c) numeric = numeric && detail::parse_double(cells[c], row[c]);
    if (!numeric) {
      if (table.empty() && width == 0) {
        width = cells.size();  // header
        continue;
      }
      throw ParseError("non-numeric cell", line_no);
    }
    if (width == 0) width = cells.size();
    if (cells.size() != width) {
      throw ParseError("expected " + std::to_string(width) + " columns, found " + std::to_string(cells.size()), line_no);
    }
    table.push_back(std::move(row));
  }
  if (table.empty()) throw ParseError("no data rows", line_no);
  if (width < 2) throw ParseError("need at least one feature column and a target column", line_no);

  DenseMatrix x(static_cast<Index>(table.size()), static_cast<Index>(width - 1));
  Vector y(static_cast<Index>(table.size()));
  for (std::size_t i = 0; i < table.size(); ++i) {
    for (std::size_t j = 0; j + 1 < width; ++j) x(static_cast<Index>(i), static_cast<Index>(j)) = table[i][j];
    y(static_cast<Index>(i)) = table[i][width - 1];
  }
  return {std::move(x), std::move(y)};
}

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return parse_csv(in);
}

}  // namespace ridgesketch::bench
