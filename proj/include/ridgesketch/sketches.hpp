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
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "ridgesketch/linalg.hpp"
#include "ridgesketch/problem.hpp"
#include "ridgesketch/rng.hpp"

namespace ridgesketch {

enum class SketchKind { subsample, gaussian, count, subcount, srht };

inline constexpr SketchKind kAllSketchKinds[] = {SketchKind::subsample, SketchKind::gaussian, SketchKind::count,
                                                 SketchKind::subcount, SketchKind::srht};

inline std::string_view to_string(SketchKind k) {
  switch (k) {
    case SketchKind::subsample: return "subsample";
    case SketchKind::gaussian: return "gaussian";
    case SketchKind::count: return "count";
    case SketchKind::subcount: return "subcount";
    case SketchKind::srht: return "srht";
  }
  return "?";
}

inline std::optional<SketchKind> parse_sketch_kind(std::string_view name) {
  for (SketchKind k : kAllSketchKinds) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

struct SketchConfig {
  SketchKind kind = SketchKind::subsample;
  std::size_t sketch_size = 1;  // tau
};

struct SubcountParams {
  std::size_t s;  // rows subsampled
  std::size_t k;  // rows summed per output row
};

/// Splits a requested sketch size into (s, k) with tau = s / k: k = 10 when
/// 10 tau <= m, otherwise k = floor(m / tau).
inline SubcountParams subcount_params(std::size_t tau, std::size_t m) {
  if (tau < 1 || tau > m) throw InputError("sketch size must lie in [1, m]");
  if (10 * tau <= m) return {10 * tau, 10};
  const std::size_t k = m / tau;
  return {k * tau, k};
}

/// One realization of a sketching matrix S (m x tau). Only the randomness
/// is stored; S itself is never formed except by materialize().
struct SketchState {
  SketchKind kind = SketchKind::subsample;
  std::size_t m = 0;
  std::size_t tau = 0;

  // subsample: selected rows, ascending. count/subcount: contributing input
  // rows. srht: selected rows of the padded transform, ascending.
  IndexList rows;
  // count/subcount: output row of each contributing input row.
  IndexList buckets;
  // count/subcount: sign per contributing row. srht: diagonal D (padded_m).
  std::vector<double> signs;
  DenseMatrix gaussian;  // m x tau
  std::size_t padded_m = 0;

  double srht_scale() const { return 1.0 / std::sqrt(static_cast<double>(tau) * static_cast<double>(padded_m)); }
};

/// Triple produced by sketching the system at the current residual.
struct SketchOutcome {
  DenseMatrix sa;       // S^T A, tau x m
  Eigen::MatrixXd sas;  // S^T A S, tau x tau
  Vector rs;            // S^T r
};

/// Draws a fresh realization. Consumption order of the generator, per kind:
///   subsample  partial Fisher-Yates over m, then rows sorted ascending
///   gaussian   m*tau normals, row-major
///   count      for each input row: bucket, then sign
///   subcount   partial Fisher-Yates over m (s picks, kept in draw order), then s signs
///   srht       padded_m signs, then partial Fisher-Yates over padded_m, sorted
inline SketchState draw(const SketchConfig& config, std::size_t m, Rng& rng) {
  const std::size_t tau = config.sketch_size;
  if (m < 1) throw InputError("sketch dimension must be >= 1");
  if (tau < 1 || tau > m) throw InputError("sketch size must lie in [1, m]");
  SketchState st;
  st.kind = config.kind;
  st.m = m;
  st.tau = tau;
  switch (config.kind) {
    case SketchKind::subsample:
      st.rows = rng.partial_shuffle(m, tau);
      std::sort(st.rows.begin(), st.rows.end());
      break;
    case SketchKind::gaussian:
      st.gaussian.resize(static_cast<Index>(m), static_cast<Index>(tau));
      for (Index i = 0; i < st.gaussian.rows(); ++i) {
        for (Index j = 0; j < st.gaussian.cols(); ++j) st.gaussian(i, j) = rng.normal();
      }
      break;
    case SketchKind::count:
      st.rows.resize(m);
      st.buckets.resize(m);
      st.signs.resize(m);
      for (std::size_t i = 0; i < m; ++i) {
        st.rows[i] = i;
        st.buckets[i] = static_cast<std::size_t>(rng.below(tau));
        st.signs[i] = rng.sign();
      }
      break;
    case SketchKind::subcount: {
      const auto [s, k] = subcount_params(tau, m);
      st.rows = rng.partial_shuffle(m, s);
      st.buckets.resize(s);
      st.signs.resize(s);
      for (std::size_t t = 0; t < s; ++t) {
        st.buckets[t] = t / k;
        st.signs[t] = rng.sign();
      }
      break;
    }
    case SketchKind::srht:
      st.padded_m = next_power_of_two(m);
      st.signs.resize(st.padded_m);
      for (double& s : st.signs) s = rng.sign();
      st.rows = rng.partial_shuffle(st.padded_m, tau);
      std::sort(st.rows.begin(), st.rows.end());
      break;
  }
  return st;
}

namespace detail {

// S^T B for a dense m x c block B.
inline DenseMatrix left_apply_dense(const SketchState& st, const DenseMatrix& b) {
  const Index c = b.cols();
  const auto tau = static_cast<Index>(st.tau);
  switch (st.kind) {
    case SketchKind::subsample:
      return select_rows(b, st.rows);
    case SketchKind::gaussian:
      return st.gaussian.transpose() * b;
    case SketchKind::count:
    case SketchKind::subcount: {
      DenseMatrix out = DenseMatrix::Zero(tau, c);
      for (std::size_t t = 0; t < st.rows.size(); ++t) {
        out.row(static_cast<Index>(st.buckets[t])) += st.signs[t] * b.row(static_cast<Index>(st.rows[t]));
      }
      return out;
    }
    case SketchKind::srht: {
      DenseMatrix padded = DenseMatrix::Zero(static_cast<Index>(st.padded_m), c);
      for (std::size_t i = 0; i < st.m; ++i) padded.row(static_cast<Index>(i)) = st.signs[i] * b.row(static_cast<Index>(i));
      fwht_columns_inplace(padded);
      DenseMatrix out = select_rows(padded, st.rows);
      out *= st.srht_scale();
      return out;
    }
  }
  throw InputError("unknown sketch kind");
}

// S^T A for a CSR matrix. Row-combining sketches touch only stored entries;
// gaussian and srht densify.
inline DenseMatrix left_apply_csr(const SketchState& st, const CsrMatrix& a) {
  const auto tau = static_cast<Index>(st.tau);
  switch (st.kind) {
    case SketchKind::subsample: {
      DenseMatrix out = DenseMatrix::Zero(tau, a.cols());
      for (std::size_t t = 0; t < st.rows.size(); ++t) axpy_row(a, st.rows[t], 1.0, out.row(static_cast<Index>(t)));
      return out;
    }
    case SketchKind::count:
    case SketchKind::subcount: {
      DenseMatrix out = DenseMatrix::Zero(tau, a.cols());
      for (std::size_t t = 0; t < st.rows.size(); ++t) {
        axpy_row(a, st.rows[t], st.signs[t], out.row(static_cast<Index>(st.buckets[t])));
      }
      return out;
    }
    case SketchKind::gaussian:
      return (a.transpose() * st.gaussian).transpose();
    case SketchKind::srht: {
      DenseMatrix padded = DenseMatrix::Zero(static_cast<Index>(st.padded_m), a.cols());
      for (std::size_t i = 0; i < st.m; ++i) axpy_row(a, i, st.signs[i], padded.row(static_cast<Index>(i)));
      fwht_columns_inplace(padded);
      DenseMatrix out = select_rows(padded, st.rows);
      out *= st.srht_scale();
      return out;
    }
  }
  throw InputError("unknown sketch kind");
}

inline Vector left_apply_vector(const SketchState& st, const Vector& r) {
  switch (st.kind) {
    case SketchKind::subsample: {
      Vector out(static_cast<Index>(st.tau));
      for (std::size_t t = 0; t < st.rows.size(); ++t) out(static_cast<Index>(t)) = r(static_cast<Index>(st.rows[t]));
      return out;
    }
    case SketchKind::gaussian:
      return st.gaussian.transpose() * r;
    case SketchKind::count:
    case SketchKind::subcount: {
      Vector out = Vector::Zero(static_cast<Index>(st.tau));
      for (std::size_t t = 0; t < st.rows.size(); ++t) {
        out(static_cast<Index>(st.buckets[t])) += st.signs[t] * r(static_cast<Index>(st.rows[t]));
      }
      return out;
    }
    case SketchKind::srht: {
      Vector padded = Vector::Zero(static_cast<Index>(st.padded_m));
      for (std::size_t i = 0; i < st.m; ++i) padded(static_cast<Index>(i)) = st.signs[i] * r(static_cast<Index>(i));
      fwht_inplace(std::span<double>(padded.data(), st.padded_m));
      Vector out(static_cast<Index>(st.tau));
      for (std::size_t t = 0; t < st.rows.size(); ++t) out(static_cast<Index>(t)) = padded(static_cast<Index>(st.rows[t]));
      return out * st.srht_scale();
    }
  }
  throw InputError("unknown sketch kind");
}

}  // namespace detail

/// S delta, an m-vector.
inline Vector expand(const SketchState& st, const Vector& delta) {
  if (static_cast<std::size_t>(delta.size()) != st.tau) throw InputError("delta length must equal the sketch size");
  switch (st.kind) {
    case SketchKind::subsample: {
      Vector out = Vector::Zero(static_cast<Index>(st.m));
      for (std::size_t t = 0; t < st.rows.size(); ++t) out(static_cast<Index>(st.rows[t])) = delta(static_cast<Index>(t));
      return out;
    }
    case SketchKind::gaussian:
      return st.gaussian * delta;
    case SketchKind::count:
    case SketchKind::subcount: {
      Vector out = Vector::Zero(static_cast<Index>(st.m));
      for (std::size_t t = 0; t < st.rows.size(); ++t) {
        out(static_cast<Index>(st.rows[t])) += st.signs[t] * delta(static_cast<Index>(st.buckets[t]));
      }
      return out;
    }
    case SketchKind::srht: {
      Vector padded = Vector::Zero(static_cast<Index>(st.padded_m));
      for (std::size_t t = 0; t < st.rows.size(); ++t) padded(static_cast<Index>(st.rows[t])) = delta(static_cast<Index>(t));
      fwht_inplace(std::span<double>(padded.data(), st.padded_m));
      Vector out(static_cast<Index>(st.m));
      for (std::size_t i = 0; i < st.m; ++i) out(static_cast<Index>(i)) = st.signs[i] * padded(static_cast<Index>(i));
      return out * st.srht_scale();
    }
  }
  throw InputError("unknown sketch kind");
}

/// Computes (S^T A, S^T A S, S^T r) for the realized S.
template <SystemMatrix M>
SketchOutcome apply(const SketchState& st, const M& a, const Vector& r) {
  if (rows(a) != st.m || cols(a) != st.m || static_cast<std::size_t>(r.size()) != st.m) {
    throw InputError("sketch was drawn for a different dimension");
  }
  SketchOutcome out;
  if constexpr (std::same_as<M, CsrMatrix>) {
    out.sa = detail::left_apply_csr(st, a);
  } else {
    out.sa = detail::left_apply_dense(st, a);
  }
  if (st.kind == SketchKind::subsample) {
    out.sas.resize(static_cast<Index>(st.tau), static_cast<Index>(st.tau));
    for (std::size_t j = 0; j < st.tau; ++j) {
      for (std::size_t i = 0; i < st.tau; ++i) {
        out.sas(static_cast<Index>(i), static_cast<Index>(j)) = out.sa(static_cast<Index>(i), static_cast<Index>(st.rows[j]));
      }
    }
  } else {
    // (S^T (S^T A)^T)^T = S^T A S
    out.sas = detail::left_apply_dense(st, DenseMatrix(out.sa.transpose())).transpose();
  }
  out.rs = detail::left_apply_vector(st, r);
  return out;
}

/// w - step * S delta. Subsample sketches only touch the tau selected entries.
inline Vector apply_update(const SketchState& st, Vector w, const Vector& delta, double step) {
  if (static_cast<std::size_t>(w.size()) != st.m) throw InputError("iterate length must equal m");
  if (static_cast<std::size_t>(delta.size()) != st.tau) throw InputError("delta length must equal the sketch size");
  if (st.kind == SketchKind::subsample) {
    for (std::size_t t = 0; t < st.rows.size(); ++t) w(static_cast<Index>(st.rows[t])) -= step * delta(static_cast<Index>(t));
    return w;
  }
  w.noalias() -= step * expand(st, delta);
  return w;
}

namespace detail {

// Sylvester Hadamard entry: (-1)^popcount(i & j).
inline double hadamard_entry(std::size_t i, std::size_t j) { return (std::popcount(i & j) % 2 == 0) ? 1.0 : -1.0; }

}  // namespace detail

/// The explicit m x tau matrix S. Built entry by entry from the stored
/// randomness, independently of apply(); test use only.
inline DenseMatrix materialize(const SketchState& st) {
  DenseMatrix s = DenseMatrix::Zero(static_cast<Index>(st.m), static_cast<Index>(st.tau));
  switch (st.kind) {
    case SketchKind::subsample:
      for (std::size_t t = 0; t < st.rows.size(); ++t) s(static_cast<Index>(st.rows[t]), static_cast<Index>(t)) = 1.0;
      break;
    case SketchKind::gaussian:
      s = st.gaussian;
      break;
    case SketchKind::count:
    case SketchKind::subcount:
      for (std::size_t t = 0; t < st.rows.size(); ++t) {
        s(static_cast<Index>(st.rows[t]), static_cast<Index>(st.buckets[t])) += st.signs[t];
      }
      break;
    case SketchKind::srht:
      // S^T = scale * I_C H D restricted to the first m columns.
      for (std::size_t t = 0; t < st.rows.size(); ++t) {
        for (std::size_t i = 0; i < st.m; ++i) {
          s(static_cast<Index>(i), static_cast<Index>(t)) =
              st.srht_scale() * detail::hadamard_entry(st.rows[t], i) * st.signs[i];
        }
      }
      break;
  }
  return s;
}

template <SystemMatrix M>
struct PaddedProblem {
  RidgeProblem<M> problem;
  std::size_t original_m;
};

/// Embeds A w = b into the next power-of-two dimension. The added block is
/// the identity with zero right-hand side, so the padded solution is the
/// original one followed by zeros.
template <SystemMatrix M>
PaddedProblem<M> pad_to_power_of_two(const RidgeProblem<M>& p) {
  const std::size_t m = p.m();
  const std::size_t padded = next_power_of_two(m);
  PaddedProblem<M> out{p, m};
  if (padded == m) return out;
  const auto mp = static_cast<Index>(padded);
  if constexpr (std::same_as<M, DenseMatrix>) {
    DenseMatrix a = DenseMatrix::Zero(mp, mp);
    a.topLeftCorner(p.a.rows(), p.a.cols()) = p.a;
    for (Index i = static_cast<Index>(m); i < mp; ++i) a(i, i) = 1.0;
    out.problem.a = std::move(a);
  } else {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(p.a.nonZeros()) + padded - m);
    for (Index i = 0; i < p.a.outerSize(); ++i) {
      for (CsrMatrix::InnerIterator it(p.a, i); it; ++it) trips.emplace_back(it.row(), it.col(), it.value());
    }
    for (Index i = static_cast<Index>(m); i < mp; ++i) trips.emplace_back(i, i, 1.0);
    CsrMatrix a(mp, mp);
    a.setFromTriplets(trips.begin(), trips.end());
    a.makeCompressed();
    out.problem.a = std::move(a);
  }
  out.problem.b = Vector::Zero(mp);
  out.problem.b.head(static_cast<Index>(m)) = p.b;
  return out;
}

/// First original_m entries of a padded solution.
inline Vector unpad(const Vector& padded_solution, std::size_t original_m) {
  if (static_cast<std::size_t>(padded_solution.size()) < original_m) throw InputError("padded solution too short");
  return padded_solution.head(static_cast<Index>(original_m));
}

}  // namespace ridgesketch
