#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "qcd/detectors.hpp"
#include "qcd/error.hpp"
#include "qcd/models.hpp"
#include "qcd/rng.hpp"

namespace qcd::sim {

/// Ground truth for one simulated stream. `v1` empty means no change ever
/// happens; an empty duration means that transient phase never ends.
struct ScenarioSpec {
  std::optional<std::uint64_t> v1;
  std::vector<std::optional<std::uint64_t>> durations;  // d_1..d_{L-1}

  static ScenarioSpec no_change() { return {}; }

  void validate(std::size_t num_phases) const {
    require(!v1 || *v1 >= 1, ErrorKind::invalid_scenario, "v1 must be at least 1");
    if (v1) {
      require(durations.size() + 1 == num_phases, ErrorKind::invalid_scenario,
              "scenario needs L-1 = " + std::to_string(num_phases - 1) + " durations, got " +
                  std::to_string(durations.size()));
    }
  }

  /// Index of the density generating X_k (0 = pre-change).
  [[nodiscard]] std::size_t phase_at(std::uint64_t k) const noexcept {
    if (!v1 || k < *v1) return 0;
    std::uint64_t start = *v1;
    for (std::size_t i = 0; i < durations.size(); ++i) {
      if (!durations[i]) return i + 1;
      start += *durations[i];  // v_{i+2} = v_{i+1} + d_{i+1}
      if (k < start) return i + 1;
    }
    return durations.size() + 1;
  }
};

namespace detail {

inline std::optional<std::uint64_t> parse_count_or_inf(std::string_view text, const std::string& what) {
  if (text == "inf" || text == "infinity") return std::nullopt;
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  require(ec == std::errc() && ptr == text.data() + text.size(), ErrorKind::invalid_scenario,
          "cannot parse " + what + " '" + std::string(text) + "'");
  return value;
}

}  // namespace detail

/// Parses "v1=INT|inf;d=INT|inf[,INT|inf...]". The d part may be omitted when L = 1.
inline ScenarioSpec parse_scenario(std::string_view text) {
  ScenarioSpec spec;
  bool have_v1 = false;
  while (!text.empty()) {
    const auto semi = text.find(';');
    const std::string_view part = text.substr(0, semi);
    text = semi == std::string_view::npos ? std::string_view{} : text.substr(semi + 1);
    const auto eq = part.find('=');
    require(eq != std::string_view::npos, ErrorKind::invalid_scenario,
            "scenario field '" + std::string(part) + "' lacks '='");
    const std::string_view key = part.substr(0, eq);
    std::string_view value = part.substr(eq + 1);
    if (key == "v1") {
      spec.v1 = detail::parse_count_or_inf(value, "v1");
      have_v1 = true;
    } else if (key == "d") {
      while (!value.empty()) {
        const auto comma = value.find(',');
        spec.durations.push_back(detail::parse_count_or_inf(value.substr(0, comma), "duration"));
        value = comma == std::string_view::npos ? std::string_view{} : value.substr(comma + 1);
      }
    } else {
      throw Error(ErrorKind::invalid_scenario, "unknown scenario field '" + std::string(key) + "'");
    }
  }
  require(have_v1, ErrorKind::invalid_scenario, "scenario must set v1");
  return spec;
}

inline std::string format_scenario(const ScenarioSpec& s) {
  auto fmt = [](const std::optional<std::uint64_t>& v) { return v ? std::to_string(*v) : std::string("inf"); };
  std::string out = "v1=" + fmt(s.v1);
  if (!s.durations.empty()) {
    out += ";d=";
    for (std::size_t i = 0; i < s.durations.size(); ++i) out += (i ? "," : "") + fmt(s.durations[i]);
  }
  return out;
}

/// Lazily generated X_1, X_2, ... with X_k ~ f_{phase_at(k)}.
class ObservationStream {
 public:
  ObservationStream(const PhaseModel& model, ScenarioSpec scenario, Xoshiro256 rng)
      : model_(&model), scenario_(std::move(scenario)), rng_(rng) {
    scenario_.validate(model.num_phases());
    for (const auto& d : model.densities()) {
      if (d.is_gaussian()) {
        normals_.emplace_back(d.gaussian().mean, d.gaussian().stdev);
      } else {
        normals_.emplace_back();
      }
    }
  }

  double next() {
    ++k_;
    phase_ = scenario_.phase_at(k_);
    const Density& d = model_->density(phase_);
    return d.is_gaussian() ? normals_[phase_](rng_) : d.sample(rng_);
  }

  std::optional<double> operator()() { return next(); }

  [[nodiscard]] std::uint64_t index() const noexcept { return k_; }
  /// Phase of the most recently generated observation.
  [[nodiscard]] std::size_t phase() const noexcept { return phase_; }

 private:
  const PhaseModel* model_;
  ScenarioSpec scenario_;
  Xoshiro256 rng_;
  std::vector<std::normal_distribution<double>> normals_;
  std::uint64_t k_ = 0;
  std::size_t phase_ = 0;
};

inline ObservationStream sample_stream(const PhaseModel& model, const ScenarioSpec& scenario, Xoshiro256 rng) {
  return ObservationStream(model, scenario, rng);
}

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. fn must write only
/// to storage owned by index i.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = static_cast<unsigned>(std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    constexpr std::size_t kChunk = 16;
    for (;;) {
      const std::size_t begin = next.fetch_add(kChunk);
      if (begin >= n) return;
      const std::size_t end = std::min(n, begin + kChunk);
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

struct TrialResult {
  std::optional<std::uint64_t> stop_time;  // empty when censored
  std::size_t crossed_in_phase = 0;

  [[nodiscard]] bool censored() const noexcept { return !stop_time.has_value(); }
};

/// Runs one detector over one stream and records the first crossing of every
/// threshold in `thresholds` (ascending). Equivalent to separate runs per
/// threshold on the same stream.
inline std::vector<TrialResult> first_passages(const PhaseModel& model, DetectorKind kind,
                                               const WeightTable& weights, const std::vector<double>& thresholds,
                                               ObservationStream& stream, std::uint64_t max_steps) {
  std::vector<TrialResult> out(thresholds.size());
  DetectorState state = DetectorState::initial(kind, model.num_phases());
  std::size_t pending = 0;  // first threshold not yet crossed
  const double never = kInf;
  for (std::uint64_t k = 1; k <= max_steps && pending < thresholds.size(); ++k) {
    const double x = stream.next();
    double stat = 0.0;
    switch (kind) {
      case DetectorKind::dcusum: stat = dcusum_step(model, state, x, never).statistic; break;
      case DetectorKind::wdcusum: stat = wdcusum_step(model, weights, state, x, never).statistic; break;
      case DetectorKind::cusum: stat = cusum_step(model, state, x, never).statistic; break;
    }
    while (pending < thresholds.size() && DetectorConfig::crosses(kind, stat, thresholds[pending])) {
      out[pending] = TrialResult{k, stream.phase()};
      ++pending;
    }
  }
  return out;
}

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::uint64_t n_trials = 0;
  std::uint64_t n_censored = 0;  // counted at max_steps in the mean
  std::vector<std::uint64_t> phase_histogram;  // crossings per phase 0..L
};

namespace detail {

inline Estimate summarize(const std::vector<TrialResult>& trials, std::uint64_t max_steps, std::size_t num_phases) {
  Estimate e;
  e.n_trials = trials.size();
  e.phase_histogram.assign(num_phases + 1, 0);
  // Two-pass in index order so the result does not depend on scheduling.
  double sum = 0.0;
  for (const auto& t : trials) {
    sum += static_cast<double>(t.stop_time.value_or(max_steps));
    if (t.censored()) {
      ++e.n_censored;
    } else {
      ++e.phase_histogram[t.crossed_in_phase];
    }
  }
  const auto n = static_cast<double>(trials.size());
  e.mean = sum / n;
  double ss = 0.0;
  for (const auto& t : trials) {
    const double d = static_cast<double>(t.stop_time.value_or(max_steps)) - e.mean;
    ss += d * d;
  }
  e.std_error = trials.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return e;
}

// trials[threshold][trial]
inline std::vector<std::vector<TrialResult>> run_trials(const PhaseModel& model, const DetectorConfig& config,
                                                        const std::vector<double>& thresholds,
                                                        const ScenarioSpec& scenario, std::size_t n_trials,
                                                        std::uint64_t max_steps, std::uint64_t stream_seed,
                                                        unsigned threads) {
  DetectorConfig probe = config;
  for (double b : thresholds) {
    probe.threshold = b;
    probe.validate(model.num_phases());
  }
  require(std::is_sorted(thresholds.begin(), thresholds.end()), ErrorKind::invalid_argument,
          "thresholds must be ascending");
  require(max_steps >= 1, ErrorKind::invalid_argument, "max_steps must be at least 1");
  scenario.validate(model.num_phases());
  const WeightTable weights = config.kind == DetectorKind::wdcusum ? WeightTable(config.rho) : WeightTable();
  std::vector<std::vector<TrialResult>> per_trial(n_trials);
  parallel_for(n_trials, threads, [&](std::size_t i) {
    ObservationStream stream(model, scenario, stream_rng(stream_seed, i));
    per_trial[i] = first_passages(model, config.kind, weights, thresholds, stream, max_steps);
  });
  std::vector<std::vector<TrialResult>> by_threshold(thresholds.size(), std::vector<TrialResult>(n_trials));
  for (std::size_t i = 0; i < n_trials; ++i) {
    for (std::size_t t = 0; t < thresholds.size(); ++t) by_threshold[t][i] = per_trial[i][t];
  }
  return by_threshold;
}

inline constexpr std::uint64_t kArlStreams = 1;
inline constexpr std::uint64_t kWaddStreams = 1000;

}  // namespace detail

/// Stream family used for ARL trials under `master_seed`.
constexpr std::uint64_t arl_stream_seed(std::uint64_t master_seed) noexcept {
  return derive_seed(master_seed, detail::kArlStreams);
}
/// Stream family used for WADD trials of scenario `scenario_id`.
constexpr std::uint64_t wadd_stream_seed(std::uint64_t master_seed, std::size_t scenario_id) noexcept {
  return derive_seed(master_seed, detail::kWaddStreams + scenario_id);
}

/// E_inf[tau] over f0-only streams. Censored trials count as max_steps, so
/// the mean is a lower estimate whenever n_censored > 0.
inline Estimate estimate_arl(const PhaseModel& model, const DetectorConfig& config, std::size_t n_trials,
                             std::uint64_t max_steps, std::uint64_t master_seed, unsigned threads = 0) {
  require(n_trials >= 100, ErrorKind::invalid_argument, "ARL estimation needs at least 100 trials");
  const auto trials = detail::run_trials(model, config, {config.threshold}, ScenarioSpec::no_change(), n_trials,
                                         max_steps, arl_stream_seed(master_seed), threads);
  return detail::summarize(trials[0], max_steps, model.num_phases());
}

/// E_1^d[tau], which is the worst-case delay for both detectors.
inline Estimate estimate_wadd(const PhaseModel& model, const DetectorConfig& config, const ScenarioSpec& scenario,
                              std::size_t n_trials, std::uint64_t max_steps, std::uint64_t master_seed,
                              unsigned threads = 0, std::size_t scenario_id = 0) {
  require(scenario.v1 && *scenario.v1 == 1, ErrorKind::invalid_scenario, "WADD is simulated with v1 = 1");
  require(n_trials >= 1, ErrorKind::invalid_argument, "need at least one trial");
  const auto trials = detail::run_trials(model, config, {config.threshold}, scenario, n_trials, max_steps,
                                         wadd_stream_seed(master_seed, scenario_id), threads);
  return detail::summarize(trials[0], max_steps, model.num_phases());
}

struct OcRow {
  double b = 0.0;
  Estimate arl;
  std::vector<Estimate> wadd;  // one per scenario
};

struct OcReport {
  DetectorKind kind = DetectorKind::dcusum;
  std::vector<double> rho;
  std::vector<ScenarioSpec> scenarios;
  std::uint64_t master_seed = 0;
  std::uint64_t arl_max_steps = 0;
  std::uint64_t wadd_max_steps = 0;
  std::vector<OcRow> rows;
};

struct SweepOptions {
  std::size_t arl_trials = 2000;
  std::size_t wadd_trials = 10000;
  std::uint64_t arl_max_steps = 0;  // 0: 50 e^{b_max}, capped at 1e8
  std::uint64_t wadd_max_steps = 1000000;
  unsigned threads = 0;
};

/// Default ARL censoring horizon: 50 times e^b for the largest threshold.
inline std::uint64_t default_arl_max_steps(double b_max) {
  const double target = 50.0 * std::exp(std::min(b_max, 40.0));
  return static_cast<std::uint64_t>(std::clamp(target, 1000.0, 1e8));
}

/// Operating characteristic: ARL per threshold and WADD per (threshold,
/// scenario). All thresholds share the same streams.
inline OcReport oc_sweep(const PhaseModel& model, DetectorKind kind, const std::vector<double>& rho,
                         const std::vector<double>& thresholds, const std::vector<ScenarioSpec>& scenarios,
                         const SweepOptions& options, std::uint64_t master_seed) {
  require(!thresholds.empty(), ErrorKind::invalid_argument, "need at least one threshold");
  OcReport report;
  report.kind = kind;
  report.rho = rho;
  report.scenarios = scenarios;
  report.master_seed = master_seed;
  report.arl_max_steps = options.arl_max_steps ? options.arl_max_steps : default_arl_max_steps(thresholds.back());
  report.wadd_max_steps = options.wadd_max_steps;
  DetectorConfig config{kind, thresholds.front(), rho};
  for (const auto& s : scenarios) {
    require(s.v1 && *s.v1 == 1, ErrorKind::invalid_scenario, "WADD scenarios must have v1 = 1");
  }
  report.rows.resize(thresholds.size());
  for (std::size_t t = 0; t < thresholds.size(); ++t) report.rows[t].b = thresholds[t];

  if (options.arl_trials > 0) {
    require(options.arl_trials >= 100, ErrorKind::invalid_argument, "ARL estimation needs at least 100 trials");
    const auto arl = detail::run_trials(model, config, thresholds, ScenarioSpec::no_change(), options.arl_trials,
                                        report.arl_max_steps, arl_stream_seed(master_seed), options.threads);
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      report.rows[t].arl = detail::summarize(arl[t], report.arl_max_steps, model.num_phases());
    }
  }
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const auto wadd = detail::run_trials(model, config, thresholds, scenarios[s], options.wadd_trials,
                                         options.wadd_max_steps, wadd_stream_seed(master_seed, s), options.threads);
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      report.rows[t].wadd.push_back(detail::summarize(wadd[t], options.wadd_max_steps, model.num_phases()));
    }
  }
  return report;
}

/// First regeneration times Y of the D-CuSum statistic under f0.
struct RegenerationSurvey {
  std::vector<std::optional<std::uint64_t>> times;  // empty: no regeneration within n_steps
  std::uint64_t n_steps = 0;

  [[nodiscard]] std::uint64_t survivors(std::uint64_t m) const {
    return static_cast<std::uint64_t>(std::count_if(times.begin(), times.end(), [m](const auto& y) {
      return !y || *y > m;
    }));
  }

  /// Empirical P(Y > m).
  [[nodiscard]] double survival(std::uint64_t m) const {
    return static_cast<double>(survivors(m)) / static_cast<double>(times.size());
  }

  [[nodiscard]] std::uint64_t regenerations() const {
    return static_cast<std::uint64_t>(std::count_if(times.begin(), times.end(), [](const auto& y) { return y.has_value(); }));
  }

  struct Slope {
    double slope = 0.0;   // log P(Y > m) / m
    double std_error = 0.0;
    std::uint64_t m = 0;  // abscissa used
  };

  /// Decay rate log(S(m)) / m at the largest m whose survivor count is at
  /// least `min_count`. Standard error by the delta method,
  /// sqrt(1/N_m - 1/N) / m.
  [[nodiscard]] std::optional<Slope> log_survival_slope(std::uint64_t min_count = 30) const {
    std::uint64_t best = 0;
    for (std::uint64_t m = 1; m <= n_steps; ++m) {
      if (survivors(m) < min_count) break;
      best = m;
    }
    if (best == 0) return std::nullopt;
    const auto n = static_cast<double>(times.size());
    const auto nm = static_cast<double>(survivors(best));
    const auto md = static_cast<double>(best);
    return Slope{std::log(nm / n) / md, std::sqrt(std::max(0.0, 1.0 / nm - 1.0 / n)) / md, best};
  }
};

inline RegenerationSurvey regeneration_survey(const PhaseModel& model, std::uint64_t n_steps, std::size_t n_trials,
                                              std::uint64_t master_seed, unsigned threads = 0) {
  require(n_steps >= 1000, ErrorKind::invalid_argument, "regeneration survey needs at least 1e3 steps");
  RegenerationSurvey survey;
  survey.n_steps = n_steps;
  survey.times.resize(n_trials);
  const std::uint64_t seed = derive_seed(master_seed, 0x5e9e);
  parallel_for(n_trials, threads, [&](std::size_t i) {
    ObservationStream stream(model, ScenarioSpec::no_change(), stream_rng(seed, i));
    DetectorState state = DetectorState::initial(DetectorKind::dcusum, model.num_phases());
    for (std::uint64_t k = 1; k <= n_steps; ++k) {
      if (dcusum_step(model, state, stream.next(), kInf).regenerated) {
        survey.times[i] = k;
        return;
      }
    }
  });
  return survey;
}

}  // namespace qcd::sim
