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
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "ridgesketch/errors.hpp"

namespace ridgesketch {

enum class MomentumVariant { none, constant, theoretical, heuristic };

struct MomentumStep {
  double gamma;  // step size
  double beta;   // momentum
};

/// Produces the (gamma_k, beta_k) sequence of a heavy-ball run.
///
/// The theoretical family is driven by a sequence eta_k in (0, 1] through
///   zeta_0 = 0,  zeta_k = (1 / eta_k) * sum_{t<k} eta_t (1 - eta_t),
///   gamma_k = eta_k / (zeta_{k+1} + 1),  beta_k = zeta_k / (zeta_{k+1} + 1).
/// eta_{k+1} may depend on beta_{k-1}, which is how the increasing rule
/// (0.995 while beta < 0.5, then 1) is evaluated. Values are cached, so
/// at() is cheap for any k once computed and always deterministic.
class MomentumSchedule {
 public:
  // eta_j as a function of j and beta_{j-2} (0 when j < 2).
  using EtaRule = std::function<double(std::size_t j, double beta_two_back)>;

  static MomentumSchedule none() { return MomentumSchedule(MomentumVariant::none); }

  static MomentumSchedule constant(double beta = 0.5) {
    if (!(beta >= 0.0 && beta < 1.0)) throw InputError("constant momentum needs beta in [0, 1)");
    MomentumSchedule s(MomentumVariant::constant);
    s.constant_beta_ = beta;
    return s;
  }

  /// gamma = 1, beta_k = min(1 - (2-eta)/((k+1)(1-eta)+1), cap).
  static MomentumSchedule heuristic(double eta = 0.5, double cap = 0.5) {
    if (!(eta > 0.0 && eta <= 1.0)) throw InputError("heuristic momentum needs eta in (0, 1]");
    if (!(cap >= 0.0 && cap < 1.0)) throw InputError("heuristic momentum cap must lie in [0, 1)");
    MomentumSchedule s(MomentumVariant::heuristic);
    s.heuristic_eta_ = eta;
    s.heuristic_cap_ = cap;
    return s;
  }

  static MomentumSchedule theoretical(EtaRule rule) {
    MomentumSchedule s(MomentumVariant::theoretical);
    s.rule_ = std::move(rule);
    return s;
  }

  static MomentumSchedule theoretical_constant(double eta) {
    check_eta(eta);
    return theoretical([eta](std::size_t, double) { return eta; });
  }

  static MomentumSchedule theoretical_increasing(double low = 0.995, double high = 1.0, double beta_switch = 0.5) {
    check_eta(low);
    check_eta(high);
    return theoretical([=](std::size_t, double beta_two_back) { return beta_two_back < beta_switch ? low : high; });
  }

  /// Arbitrary eta sequence; the last value repeats past the end.
  static MomentumSchedule theoretical_sequence(std::vector<double> etas) {
    if (etas.empty()) throw InputError("eta sequence must not be empty");
    for (double e : etas) check_eta(e);
    return theoretical([etas = std::move(etas)](std::size_t j, double) { return etas[std::min(j, etas.size() - 1)]; });
  }

  MomentumVariant variant() const { return variant_; }

  MomentumStep at(std::size_t k) {
    switch (variant_) {
      case MomentumVariant::none: return {1.0, 0.0};
      case MomentumVariant::constant: return {1.0, constant_beta_};
      case MomentumVariant::heuristic: {
        const double eta = heuristic_eta_;
        const double denom = static_cast<double>(k + 1) * (1.0 - eta) + 1.0;
        // the raw rule tends to 1, which is unstable with a unit step; hold it at the cap
        return {1.0, std::min(1.0 - (2.0 - eta) / denom, heuristic_cap_)};
      }
      case MomentumVariant::theoretical:
        extend(k + 1);
        return {eta_[k] / (zeta_[k + 1] + 1.0), beta_[k]};
    }
    return {1.0, 0.0};
  }

  /// eta_k of the theoretical family.
  double eta(std::size_t k) {
    require_theoretical();
    extend(k);
    return eta_[k];
  }

  double zeta(std::size_t k) {
    require_theoretical();
    extend(k);
    return zeta_[k];
  }

 private:
  explicit MomentumSchedule(MomentumVariant v) : variant_(v) {}

  static void check_eta(double eta) {
    if (!(eta > 0.0 && eta <= 1.0)) throw InputError("eta must lie in (0, 1]");
  }

  void require_theoretical() const {
    if (variant_ != MomentumVariant::theoretical) throw InputError("eta/zeta are defined for theoretical schedules only");
  }

  // Fills eta_, zeta_ up to index j and beta_ up to j - 1.
  void extend(std::size_t j) {
    while (eta_.size() <= j) {
      const std::size_t i = eta_.size();
      const double beta_two_back = i >= 2 ? beta_[i - 2] : 0.0;
      const double e = rule_(i, beta_two_back);
      check_eta(e);
      eta_.push_back(e);
      zeta_.push_back(i == 0 ? 0.0 : prefix_ / e);
      prefix_ += e * (1.0 - e);
      if (i >= 1) beta_.push_back(zeta_[i - 1] / (zeta_[i] + 1.0));
    }
  }

  MomentumVariant variant_;
  double constant_beta_ = 0.5;
  double heuristic_eta_ = 0.5;
  double heuristic_cap_ = 0.5;
  EtaRule rule_;
  std::vector<double> eta_;
  std::vector<double> zeta_;
  std::vector<double> beta_;
  double prefix_ = 0.0;  // sum_{t < eta_.size()} eta_t (1 - eta_t)
};

inline std::string_view to_string(MomentumVariant v) {
  switch (v) {
    case MomentumVariant::none: return "none";
    case MomentumVariant::constant: return "constant";
    case MomentumVariant::theoretical: return "increasing";
    case MomentumVariant::heuristic: return "heuristic";
  }
  return "?";
}

/// CLI-facing names: none, constant, increasing, heuristic.
inline std::optional<MomentumSchedule> schedule_from_name(std::string_view name) {
  if (name == "none") return MomentumSchedule::none();
  if (name == "constant") return MomentumSchedule::constant();
  if (name == "increasing") return MomentumSchedule::theoretical_increasing();
  if (name == "heuristic") return MomentumSchedule::heuristic();
  return std::nullopt;
}

}  // namespace ridgesketch
