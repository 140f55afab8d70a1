#pragma once

// Short-window property checks of the recursive detectors against the
// exhaustive oracles, run on seeded random streams. Shared by the `validate`
// command and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qcd/detectors.hpp"
#include "qcd/io.hpp"
#include "qcd/models.hpp"
#include "qcd/oracle.hpp"
#include "qcd/rng.hpp"
#include "qcd/simulate.hpp"

namespace qcd::validation {

struct PropertyResult {
  std::string name;
  bool passed = true;
  bool skipped = false;
  std::string detail;
  std::optional<std::size_t> failing_stream;  // replay with stream_rng(seed, index)
};

struct Options {
  std::size_t n_streams = 1000;
  std::size_t window = 25;
  std::vector<double> rho;  // empty: 0.02 for every transient phase
  std::uint64_t seed = 1;
  double tolerance = 1e-9;
  std::size_t martingale_streams = 100000;
  std::size_t martingale_window = 0;  // 0: chosen from the likelihood-ratio second moment
};

/// Random ground truth for validation stream `index`: a quarter of the
/// streams never change; the rest change at a uniform v1 in the window with
/// uniform transient durations up to half the window.
inline sim::ScenarioSpec random_scenario(std::size_t num_phases, std::size_t window, Xoshiro256& rng) {
  sim::ScenarioSpec s;
  if (rng.uniform() < 0.25) return s;
  s.v1 = std::uniform_int_distribution<std::uint64_t>(1, window)(rng);
  std::uniform_int_distribution<std::uint64_t> dur(0, window / 2);
  for (std::size_t i = 1; i < num_phases; ++i) s.durations.emplace_back(dur(rng));
  return s;
}

/// Validation stream `index` under `seed`: X_1..X_window.
inline std::vector<double> validation_stream(const PhaseModel& model, std::size_t window, std::uint64_t seed,
                                             std::size_t index) {
  Xoshiro256 rng = stream_rng(derive_seed(seed, 0x7a11d), index);
  sim::ObservationStream stream(model, random_scenario(model.num_phases(), window, rng), rng);
  std::vector<double> xs(window);
  for (auto& x : xs) x = stream.next();
  return xs;
}

inline std::vector<double> resolve_rho(const PhaseModel& model, const std::vector<double>& rho) {
  if (!rho.empty()) return rho;
  return std::vector<double>(model.num_phases() - 1, 0.02);
}

namespace detail {

inline std::string describe(std::size_t stream, std::size_t k, double a, double b) {
  std::ostringstream out;
  out << "stream " << stream << " k=" << k << ": " << io::format_double(a) << " vs " << io::format_double(b);
  return out.str();
}

}  // namespace detail

/// Recursive D-CuSum and WD-CuSum statistics equal the exhaustive maxima at
/// every step of every stream.
inline PropertyResult oracle_equivalence(const PhaseModel& model, const Options& opt) {
  PropertyResult r{"oracle equivalence"};
  const std::size_t L = model.num_phases();
  if (L > oracle::kMaxPhases || opt.window > oracle::kMaxWindow) {
    r.skipped = true;
    r.detail = "exhaustive oracle limited to L <= 3 and windows <= 30";
    return r;
  }
  const auto rho = resolve_rho(model, opt.rho);
  const WeightTable weights(rho);
  double worst = 0.0;
  for (std::size_t s = 0; s < opt.n_streams && r.passed; ++s) {
    const auto xs = validation_stream(model, opt.window, opt.seed, s);
    const oracle::LlrTable table(model, xs);
    auto d = DetectorState::initial(DetectorKind::dcusum, L);
    auto w = DetectorState::initial(DetectorKind::wdcusum, L);
    for (std::size_t k = 1; k <= xs.size(); ++k) {
      (void)dcusum_step(model, d, xs[k - 1], kInf);
      (void)wdcusum_step(model, weights, w, xs[k - 1], kInf);
      const double dref = oracle::glr_bruteforce(table, k).value;
      const double wref = oracle::weighted_glr_bruteforce(table, rho, k).value;
      const double err = std::max(std::abs(d.statistic() - dref), std::abs(w.statistic() - wref));
      worst = std::max(worst, err);
      if (!(err <= opt.tolerance)) {
        r.passed = false;
        r.failing_stream = s;
        r.detail = std::abs(d.statistic() - dref) > opt.tolerance
                       ? "D-CuSum " + detail::describe(s, k, d.statistic(), dref)
                       : "WD-CuSum " + detail::describe(s, k, w.statistic(), wref);
        break;
      }
    }
  }
  if (r.passed) r.detail = "max abs error " + io::format_double(worst);
  return r;
}

/// With L = 1, max(0, D-CuSum) is Page's CuSum, bit for bit.
inline PropertyResult cusum_reduction(const PhaseModel& model, std::size_t n_steps, std::uint64_t seed) {
  PropertyResult r{"classical CuSum reduction"};
  if (model.num_phases() != 1) {
    r.skipped = true;
    r.detail = "needs L = 1";
    return r;
  }
  // change halfway through so both drifts are exercised
  sim::ObservationStream stream(model, sim::parse_scenario("v1=" + std::to_string(n_steps / 2 + 1)),
                                stream_rng(derive_seed(seed, 0xc05), 0));
  auto d = DetectorState::initial(DetectorKind::dcusum, 1);
  auto c = DetectorState::initial(DetectorKind::cusum, 1);
  for (std::size_t k = 1; k <= n_steps; ++k) {
    const double x = stream.next();
    (void)dcusum_step(model, d, x, kInf);
    (void)cusum_step(model, c, x, kInf);
    const double reduced = std::max(0.0, d.omega[0]);
    if (reduced != c.omega[0]) {
      r.passed = false;
      r.detail = "step " + std::to_string(k) + ": " + io::format_double(reduced) + " vs " +
                 io::format_double(c.omega[0]);
      return r;
    }
  }
  r.detail = std::to_string(n_steps) + " steps identical";
  return r;
}

/// The L = 2 WD-CuSum update written out by hand equals the general one.
inline PropertyResult two_channel_form(const PhaseModel& model, const Options& opt) {
  PropertyResult r{"two-channel WD-CuSum form"};
  if (model.num_phases() != 2) {
    r.skipped = true;
    r.detail = "needs L = 2";
    return r;
  }
  const auto rho = resolve_rho(model, opt.rho);
  const WeightTable weights(rho);
  for (std::size_t s = 0; s < opt.n_streams; ++s) {
    const auto xs = validation_stream(model, opt.window, opt.seed, s);
    auto a = DetectorState::initial(DetectorKind::wdcusum, 2);
    auto b = a;
    for (std::size_t k = 1; k <= xs.size(); ++k) {
      (void)wdcusum_step(model, weights, a, xs[k - 1], kInf);
      (void)wdcusum_step_l2(model, rho[0], b, xs[k - 1], kInf);
      if (a.omega != b.omega) {
        r.passed = false;
        r.failing_stream = s;
        r.detail = detail::describe(s, k, a.statistic(), b.statistic());
        return r;
      }
    }
  }
  r.detail = "bit-identical on " + std::to_string(opt.n_streams) + " streams";
  return r;
}

/// W~[k] <= W^[k] <= W~[k] + k max|log(1-rho_i)| + sum|log rho_i|.
inline PropertyResult ordering(const PhaseModel& model, const Options& opt) {
  PropertyResult r{"ordering"};
  const std::size_t L = model.num_phases();
  const auto rho = resolve_rho(model, opt.rho);
  const WeightTable weights(rho);
  double stay = 0.0;
  double jumps = 0.0;
  for (double p : rho) {
    stay = std::max(stay, std::abs(std::log1p(-p)));
    jumps += std::abs(std::log(p));
  }
  for (std::size_t s = 0; s < opt.n_streams; ++s) {
    const auto xs = validation_stream(model, opt.window, opt.seed, s);
    auto d = DetectorState::initial(DetectorKind::dcusum, L);
    auto w = DetectorState::initial(DetectorKind::wdcusum, L);
    for (std::size_t k = 1; k <= xs.size(); ++k) {
      (void)dcusum_step(model, d, xs[k - 1], kInf);
      (void)wdcusum_step(model, weights, w, xs[k - 1], kInf);
      const double gap = d.statistic() - w.statistic();
      const double bound = static_cast<double>(k) * stay + jumps;
      if (!(gap >= -opt.tolerance && gap <= bound + opt.tolerance)) {
        r.passed = false;
        r.failing_stream = s;
        r.detail = "gap " + detail::describe(s, k, gap, bound);
        return r;
      }
    }
  }
  r.detail = "held on " + std::to_string(opt.n_streams) + " streams";
  return r;
}

/// W~[k] <= W'[k] <= log R[k] with geometric duration weights (L = 2).
inline PropertyResult sandwich(const PhaseModel& model, const Options& opt) {
  PropertyResult r{"mixture sandwich"};
  if (model.num_phases() != 2 || opt.window > oracle::kMaxWindow) {
    r.skipped = true;
    r.detail = "mixture statistics need L = 2";
    return r;
  }
  const auto rho = resolve_rho(model, opt.rho);
  const auto g = oracle::DurationPmf::geometric(rho[0], opt.window);
  for (std::size_t s = 0; s < opt.n_streams; ++s) {
    const auto xs = validation_stream(model, opt.window, opt.seed, s);
    const oracle::LlrTable table(model, xs);
    for (std::size_t k = 1; k <= xs.size(); ++k) {
      const double w_tilde = oracle::weighted_glr_bruteforce(table, rho, k).raw;
      const double w_prime = oracle::mixture_glr(table, g, k);
      const double log_r = oracle::mixture_sr_statistic(table, g, k);
      if (!(w_tilde <= w_prime + opt.tolerance && w_prime <= log_r + opt.tolerance)) {
        r.passed = false;
        r.failing_stream = s;
        r.detail = "stream " + std::to_string(s) + " k=" + std::to_string(k) + ": " + io::format_double(w_tilde) +
                   " <= " + io::format_double(w_prime) + " <= " + io::format_double(log_r) + " violated";
        return r;
      }
    }
  }
  r.detail = "held on " + std::to_string(opt.n_streams) + " streams";
  return r;
}

struct MartingaleResult {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t window = 0;
  std::size_t n_streams = 0;
};

/// Monte Carlo mean of R[k] under f0 with geometric weights, whose
/// expectation is exactly k.
inline MartingaleResult martingale_mean(const PhaseModel& model, double rho, std::size_t window, std::size_t n_streams,
                                        std::uint64_t seed) {
  require(model.num_phases() == 2, ErrorKind::unsupported_l, "mixture statistics need L = 2");
  const auto g = oracle::DurationPmf::geometric(rho, window);
  std::vector<double> values(n_streams);
  const std::uint64_t family = derive_seed(seed, 0x3a27);
  std::vector<double> xs(window);
  for (std::size_t s = 0; s < n_streams; ++s) {
    sim::ObservationStream stream(model, sim::ScenarioSpec::no_change(), stream_rng(family, s));
    for (auto& x : xs) x = stream.next();
    values[s] = std::exp(oracle::mixture_sr_statistic(oracle::LlrTable(model, xs), g, window));
  }
  MartingaleResult m;
  m.window = window;
  m.n_streams = n_streams;
  double sum = 0.0;
  for (double v : values) sum += v;
  m.mean = sum / static_cast<double>(n_streams);
  double ss = 0.0;
  for (double v : values) ss += (v - m.mean) * (v - m.mean);
  m.std_error = std::sqrt(ss / static_cast<double>(n_streams - 1) / static_cast<double>(n_streams));
  return m;
}

/// Largest k <= 20 for which E_f0[(f_i/f0)^2]^k stays below 100, so that the
/// Monte Carlo mean of R[k] has a usable standard error. 0 if none.
inline std::size_t martingale_window(const PhaseModel& model) {
  double m2 = 1.0;
  for (std::size_t i = 1; i <= model.num_phases(); ++i) m2 = std::max(m2, likelihood_ratio_second_moment(model, i));
  std::size_t k = 0;
  while (k < 20 && std::pow(m2, static_cast<double>(k + 1)) <= 100.0) ++k;
  return k;
}

inline PropertyResult martingale(const PhaseModel& model, const Options& opt) {
  PropertyResult r{"martingale mean"};
  if (model.num_phases() != 2) {
    r.skipped = true;
    r.detail = "mixture statistics need L = 2";
    return r;
  }
  const std::size_t k = opt.martingale_window ? opt.martingale_window : martingale_window(model);
  if (k == 0) {
    r.skipped = true;
    r.detail = "likelihood ratio second moment too large for a Monte Carlo check";
    return r;
  }
  const auto rho = resolve_rho(model, opt.rho);
  const auto m = martingale_mean(model, rho[0], k, opt.martingale_streams, opt.seed);
  const double z = (m.mean - static_cast<double>(k)) / m.std_error;
  r.passed = std::abs(z) <= 3.0;
  std::ostringstream out;
  out << "E R[" << k << "] = " << io::format_double(m.mean) << " +- " << io::format_double(m.std_error)
      << " (z = " << io::format_double(std::round(z * 100.0) / 100.0) << ")";
  r.detail = out.str();
  return r;
}

inline std::vector<PropertyResult> run_all(const PhaseModel& model, const Options& opt) {
  std::vector<PropertyResult> out;
  out.push_back(oracle_equivalence(model, opt));
  out.push_back(cusum_reduction(model, 100000, opt.seed));
  out.push_back(two_channel_form(model, opt));
  out.push_back(ordering(model, opt));
  out.push_back(sandwich(model, opt));
  out.push_back(martingale(model, opt));
  return out;
}

}  // namespace qcd::validation
