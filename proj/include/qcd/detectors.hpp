#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qcd/error.hpp"
#include "qcd/models.hpp"
#include "qcd/numeric.hpp"

namespace qcd {

enum class DetectorKind { dcusum, wdcusum, cusum };

inline constexpr std::string_view to_string(DetectorKind kind) noexcept {
  switch (kind) {
    case DetectorKind::dcusum: return "dcusum";
    case DetectorKind::wdcusum: return "wdcusum";
    case DetectorKind::cusum: return "cusum";
  }
  return "?";
}

inline DetectorKind parse_detector_kind(std::string_view name) {
  if (name == "dcusum") return DetectorKind::dcusum;
  if (name == "wdcusum") return DetectorKind::wdcusum;
  if (name == "cusum") return DetectorKind::cusum;
  throw Error(ErrorKind::invalid_argument, "unknown detector kind '" + std::string(name) + "'");
}

struct DetectorConfig {
  DetectorKind kind = DetectorKind::dcusum;
  double threshold = 1.0;
  std::vector<double> rho;  // rho_1..rho_{L-1}; WD-CuSum only

  void validate(std::size_t num_phases) const {
    require(threshold > 0.0 && std::isfinite(threshold), ErrorKind::invalid_argument,
            "threshold must be positive and finite");
    if (kind == DetectorKind::cusum) {
      require(num_phases == 1, ErrorKind::invalid_argument, "classical CuSum requires L = 1");
    }
    if (kind == DetectorKind::wdcusum) {
      require(rho.size() + 1 == num_phases, ErrorKind::invalid_argument,
              "WD-CuSum needs L-1 = " + std::to_string(num_phases - 1) + " weights, got " +
                  std::to_string(rho.size()));
      for (double r : rho) {
        require(r > 0.0 && r < 1.0, ErrorKind::invalid_argument, "every rho must lie strictly in (0, 1)");
      }
    }
  }

  /// Crossing rule: strict for D-CuSum and CuSum, inclusive for WD-CuSum.
  [[nodiscard]] bool crosses(double statistic) const noexcept { return crosses(kind, statistic, threshold); }

  static bool crosses(DetectorKind kind, double statistic, double b) noexcept {
    return kind == DetectorKind::wdcusum ? statistic >= b : statistic > b;
  }
};

/// Log-weights of the geometric duration prior, laid out for the WD-CuSum
/// update. With rho_0 = 1 and rho_L = 0:
///   penalty(j, i) = sum_{l=j}^{i-1} log rho_l   for 0 <= j <= i <= L
///   stay(i)       = log(1 - rho_i)              (stay(L) = 0)
class WeightTable {
 public:
  WeightTable() = default;

  explicit WeightTable(const std::vector<double>& rho) : num_phases_(rho.size() + 1) {
    const std::size_t L = num_phases_;
    std::vector<double> log_rho(L, 0.0);  // index l = 0..L-1, log_rho[0] = log 1
    for (std::size_t l = 1; l < L; ++l) log_rho[l] = std::log(rho[l - 1]);
    stay_.assign(L + 1, 0.0);
    for (std::size_t i = 1; i < L; ++i) stay_[i] = std::log1p(-rho[i - 1]);
    penalty_.assign((L + 1) * (L + 1), 0.0);
    for (std::size_t i = 0; i <= L; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double s = 0.0;
        for (std::size_t l = j; l < i; ++l) s += log_rho[l];
        penalty_[j * (L + 1) + i] = s;
      }
    }
  }

  [[nodiscard]] std::size_t num_phases() const noexcept { return num_phases_; }
  [[nodiscard]] double penalty(std::size_t j, std::size_t i) const noexcept {
    return penalty_[j * (num_phases_ + 1) + i];
  }
  [[nodiscard]] double stay(std::size_t i) const noexcept { return stay_[i]; }

 private:
  std::size_t num_phases_ = 0;
  std::vector<double> penalty_;
  std::vector<double> stay_;
};

struct DetectorState {
  std::vector<double> omega;  // Omega^(1..L)
  std::uint64_t k = 0;
  std::optional<std::uint64_t> stopped_at;

  /// Positive part of the detection statistic, max(omega, 0).
  [[nodiscard]] double statistic() const noexcept {
    double s = 0.0;
    for (double w : omega) s = std::max(s, w);
    return s;
  }

  /// max(omega) before flooring at zero.
  [[nodiscard]] double raw_statistic() const noexcept {
    return omega.empty() ? 0.0 : *std::max_element(omega.begin(), omega.end());
  }

  static DetectorState initial(DetectorKind kind, std::size_t num_phases) {
    DetectorState s;
    s.omega.assign(num_phases, kind == DetectorKind::wdcusum ? kLogZero : 0.0);
    return s;
  }
};

struct StepOutcome {
  double statistic = 0.0;
  bool regenerated = false;
  bool crossed = false;
};

namespace detail {

inline StepOutcome finish_step(DetectorState& state, DetectorKind kind, double threshold) {
  ++state.k;
  StepOutcome out;
  out.statistic = state.statistic();
  out.regenerated = out.statistic == 0.0;
  out.crossed = DetectorConfig::crosses(kind, out.statistic, threshold);
  if (out.crossed && !state.stopped_at) state.stopped_at = state.k;
  return out;
}

}  // namespace detail

// The updates below walk i from L down to 1 and overwrite omega[i-1] in place.
// Channel i only reads channels j <= i, which still hold step k-1 values at
// that point, so the update is simultaneous without scratch storage.

/// D-CuSum: Omega_i[k] = max{0, Omega_1[k-1], ..., Omega_i[k-1]} + Z_i(x).
inline StepOutcome dcusum_step(const PhaseModel& model, DetectorState& state, double x, double threshold) {
  const std::size_t L = model.num_phases();
  const double l0 = model.log_f0(x);
  double* omega = state.omega.data();
  for (std::size_t i = L; i >= 1; --i) {
    double best = 0.0;
    for (std::size_t j = 0; j < i; ++j) best = std::max(best, omega[j]);
    omega[i - 1] = best + model.llr_given_f0(i, x, l0);
  }
  return detail::finish_step(state, DetectorKind::dcusum, threshold);
}

/// WD-CuSum, general L:
///   Omega_i[k] = max_{0<=j<=i}(Omega_j[k-1] + sum_{l=j}^{i-1} log rho_l) + Z_i(x) + log(1-rho_i),
/// with Omega_0 == 0.
inline StepOutcome wdcusum_step(const PhaseModel& model, const WeightTable& weights, DetectorState& state,
                                double x, double threshold) {
  const std::size_t L = model.num_phases();
  const double l0 = model.log_f0(x);
  double* omega = state.omega.data();
  for (std::size_t i = L; i >= 1; --i) {
    double best = weights.penalty(0, i);
    for (std::size_t j = 1; j <= i; ++j) best = std::max(best, omega[j - 1] + weights.penalty(j, i));
    omega[i - 1] = best + model.llr_given_f0(i, x, l0) + weights.stay(i);
  }
  return detail::finish_step(state, DetectorKind::wdcusum, threshold);
}

/// The two-channel WD-CuSum update written out for L = 2.
inline StepOutcome wdcusum_step_l2(const PhaseModel& model, double rho1, DetectorState& state, double x,
                                   double threshold) {
  require(model.num_phases() == 2, ErrorKind::unsupported_l, "specialized WD-CuSum update is for L = 2");
  const double l0 = model.log_f0(x);
  const double log_rho = std::log(rho1);
  const double w1 = state.omega[0];
  const double w2 = state.omega[1];
  state.omega[0] = std::max(w1, 0.0) + model.llr_given_f0(1, x, l0) + std::log1p(-rho1);
  state.omega[1] = std::max({log_rho, w1 + log_rho, w2}) + model.llr_given_f0(2, x, l0);
  return detail::finish_step(state, DetectorKind::wdcusum, threshold);
}

/// Page's CuSum, W[k] = max(0, W[k-1] + Z_1(x)); requires L = 1.
inline StepOutcome cusum_step(const PhaseModel& model, DetectorState& state, double x, double threshold) {
  require(model.num_phases() == 1, ErrorKind::unsupported_l, "classical CuSum requires L = 1");
  state.omega[0] = std::max(0.0, state.omega[0] + model.llr(1, x));
  return detail::finish_step(state, DetectorKind::cusum, threshold);
}

/// A detector bound to one model and configuration, owning its state.
/// Keeps running after the threshold is crossed; the first crossing time is
/// latched in state().stopped_at.
class Detector {
 public:
  Detector(PhaseModel model, DetectorConfig config) : model_(std::move(model)), config_(std::move(config)) {
    config_.validate(model_.num_phases());
    if (config_.kind == DetectorKind::wdcusum) weights_ = WeightTable(config_.rho);
    reset();
  }

  StepOutcome step(double x) {
    switch (config_.kind) {
      case DetectorKind::dcusum: return dcusum_step(model_, state_, x, config_.threshold);
      case DetectorKind::wdcusum: return wdcusum_step(model_, weights_, state_, x, config_.threshold);
      case DetectorKind::cusum: return cusum_step(model_, state_, x, config_.threshold);
    }
    return {};
  }

  void reset() { state_ = DetectorState::initial(config_.kind, model_.num_phases()); }

  [[nodiscard]] const DetectorState& state() const noexcept { return state_; }
  [[nodiscard]] const DetectorConfig& config() const noexcept { return config_; }
  [[nodiscard]] const PhaseModel& model() const noexcept { return model_; }
  [[nodiscard]] double statistic() const noexcept { return state_.statistic(); }

 private:
  PhaseModel model_;
  DetectorConfig config_;
  WeightTable weights_;
  DetectorState state_;
};

struct RunOutcome {
  std::optional<std::uint64_t> stop_time;  // empty when censored
  std::uint64_t steps = 0;

  [[nodiscard]] bool censored() const noexcept { return !stop_time.has_value(); }
};

/// Feeds observations from `next()` (returning std::optional<double>) until the
/// stopping rule fires or `max_steps` samples have been consumed.
template <typename Source>
RunOutcome run_until_stop(const PhaseModel& model, const DetectorConfig& config, Source&& next,
                          std::uint64_t max_steps) {
  require(max_steps >= 1, ErrorKind::invalid_argument, "max_steps must be at least 1");
  Detector detector(model, config);
  RunOutcome out;
  while (out.steps < max_steps) {
    const std::optional<double> x = next();
    if (!x) {
      throw Error(ErrorKind::stream_ended,
                  "observation source ended after " + std::to_string(out.steps) + " samples without a stop");
    }
    ++out.steps;
    if (detector.step(*x).crossed) {
      out.stop_time = out.steps;
      return out;
    }
  }
  return out;
}

}  // namespace qcd
