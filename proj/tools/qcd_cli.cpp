// qcd: streaming detection, Monte Carlo operating characteristics, threshold
// design and model validation.
//
// Exit codes: 0 ok, 2 input error, 3 input ended without a stop,
// 4 validation error, 5 certification or property failure.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qcd/qcd.hpp"
#include "qcd/validation.hpp"

namespace {

using namespace qcd;
using nlohmann::json;

constexpr int kOk = 0;
constexpr int kInputError = 2;
constexpr int kNoStop = 3;
constexpr int kValidation = 4;
constexpr int kCertification = 5;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.emplace_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

// Comma-separated reals; "inf" allowed when `allow_inf`.
std::vector<double> parse_list(const std::string& text, const std::string& what, bool allow_inf = false) {
  std::vector<double> out;
  for (const auto& item : split(text, ',')) {
    if (allow_inf && (item == "inf" || item == "infinity")) {
      out.push_back(kInf);
      continue;
    }
    const auto v = parse_number(item);
    if (!v) throw Error(ErrorKind::invalid_argument, "cannot parse " + what + " value '" + item + "'");
    out.push_back(*v);
  }
  return out;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::out_of_support: return kInputError;
    case ErrorKind::stream_ended: return kNoStop;
    default: return kValidation;
  }
}

// ---------------------------------------------------------------- detect

struct DetectArgs {
  std::string model;
  std::string kind = "dcusum";
  double threshold = 0.0;
  std::string rho;
  std::string input;
  std::string csv_column;
  bool trace = false;
};

/// Reads observations one at a time from a stream of lines.
class LineSource {
 public:
  LineSource(std::istream& in, std::string column) : in_(in), column_(std::move(column)) {}

  std::optional<double> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (trim(line).empty()) continue;
      if (!column_.empty() && !column_index_) {
        const auto names = split(line, ',');
        for (std::size_t i = 0; i < names.size(); ++i) {
          if (names[i] == column_) column_index_ = i;
        }
        if (!column_index_) throw InputError("line " + std::to_string(line_no_) + ": no CSV column '" + column_ + "'");
        continue;
      }
      std::string field = line;
      if (column_index_) {
        const auto fields = split(line, ',');
        if (*column_index_ >= fields.size()) {
          throw InputError("line " + std::to_string(line_no_) + ": missing column '" + column_ + "'");
        }
        field = fields[*column_index_];
      }
      const auto v = parse_number(field);
      if (!v) throw InputError("line " + std::to_string(line_no_) + ": not a number: '" + std::string(trim(field)) + "'");
      return v;
    }
    return std::nullopt;
  }

  [[nodiscard]] std::size_t line() const noexcept { return line_no_; }

 private:
  std::istream& in_;
  std::string column_;
  std::optional<std::size_t> column_index_;
  std::size_t line_no_ = 0;
};

int cmd_detect(const DetectArgs& a) {
  const PhaseModel model = io::load_model(a.model);
  DetectorConfig config{parse_detector_kind(a.kind), a.threshold, {}};
  if (!a.rho.empty()) config.rho = parse_list(a.rho, "rho");
  Detector detector(model, config);

  std::ifstream file;
  if (!a.input.empty()) {
    file.open(a.input);
    if (!file) throw InputError("cannot open input file '" + a.input + "'");
  }
  LineSource source(a.input.empty() ? std::cin : file, a.csv_column);
  if (a.trace) std::cout << "k,statistic,regenerated\n";
  while (const auto x = source.next()) {
    StepOutcome out;
    try {
      out = detector.step(*x);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::out_of_support) throw InputError("line " + std::to_string(source.line()) + ": " + e.what());
      throw;
    }
    if (a.trace) {
      std::cout << detector.state().k << ',' << io::format_double(out.statistic) << ',' << (out.regenerated ? 1 : 0)
                << '\n';
    }
    if (out.crossed) {
      std::cout << "STOP k=" << detector.state().k << " statistic=" << io::format_double(out.statistic) << std::endl;
      return kOk;
    }
  }
  std::cout << std::flush;
  std::cerr << "input ended after " << detector.state().k << " samples without crossing b = "
            << io::format_double(config.threshold) << "\n";
  return kNoStop;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string manifest;
  std::string model;
  std::string kind = "dcusum";
  std::string thresholds;
  std::string rho;
  std::vector<std::string> scenarios;
  std::uint64_t seed = 1;
  std::size_t trials = 10000;
  std::size_t arl_trials = 2000;
  std::uint64_t max_steps = 1000000;
  std::uint64_t arl_max_steps = 0;
  std::string out;
  unsigned threads = 0;
};

/// Everything that determines the output files.
struct Manifest {
  std::string model;
  DetectorKind kind = DetectorKind::dcusum;
  std::vector<double> thresholds;
  std::vector<double> rho;
  std::vector<std::string> scenarios;
  std::uint64_t seed = 1;
  sim::SweepOptions options;
  std::string out;
};

json manifest_json(const Manifest& m) {
  return {{"model", m.model},
          {"kind", std::string(to_string(m.kind))},
          {"thresholds", m.thresholds},
          {"rho", m.rho},
          {"scenarios", m.scenarios},
          {"seed", m.seed},
          {"wadd_trials", m.options.wadd_trials},
          {"arl_trials", m.options.arl_trials},
          {"wadd_max_steps", m.options.wadd_max_steps},
          {"arl_max_steps", m.options.arl_max_steps},
          {"out", m.out}};
}

Manifest manifest_from_json(const json& j) {
  try {
    Manifest m;
    m.model = j.at("model").get<std::string>();
    m.kind = parse_detector_kind(j.at("kind").get<std::string>());
    m.thresholds = j.at("thresholds").get<std::vector<double>>();
    m.rho = j.value("rho", std::vector<double>{});
    m.scenarios = j.value("scenarios", std::vector<std::string>{});
    m.seed = j.value("seed", std::uint64_t{1});
    m.options.wadd_trials = j.value("wadd_trials", m.options.wadd_trials);
    m.options.arl_trials = j.value("arl_trials", m.options.arl_trials);
    m.options.wadd_max_steps = j.value("wadd_max_steps", m.options.wadd_max_steps);
    m.options.arl_max_steps = j.value("arl_max_steps", m.options.arl_max_steps);
    m.out = j.value("out", std::string{});
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_argument, std::string("manifest: ") + e.what());
  }
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::invalid_argument, "cannot write '" + path + "'");
  out << text;
}

int cmd_simulate(const SimulateArgs& a, const CLI::App& app) {
  Manifest m;
  if (!a.manifest.empty()) {
    std::ifstream in(a.manifest);
    if (!in) throw Error(ErrorKind::invalid_argument, "cannot open manifest '" + a.manifest + "'");
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw Error(ErrorKind::invalid_argument, std::string("manifest: ") + e.what());
    }
    m = manifest_from_json(j);
    if (app.count("--out")) m.out = a.out;
    if (app.count("--seed")) m.seed = a.seed;
  } else {
    if (a.model.empty() || a.thresholds.empty()) {
      throw Error(ErrorKind::invalid_argument, "simulate needs --manifest or --model and --threshold");
    }
    m.model = a.model;
    m.kind = parse_detector_kind(a.kind);
    m.thresholds = parse_list(a.thresholds, "threshold");
    if (!a.rho.empty()) m.rho = parse_list(a.rho, "rho");
    m.scenarios = a.scenarios;
    m.seed = a.seed;
    m.options.wadd_trials = a.trials;
    m.options.arl_trials = a.arl_trials;
    m.options.wadd_max_steps = a.max_steps;
    m.options.arl_max_steps = a.arl_max_steps;
    m.out = a.out;
  }
  if (m.out.empty()) throw Error(ErrorKind::invalid_argument, "simulate needs --out PREFIX");
  m.options.threads = a.threads;
  if (m.options.arl_max_steps == 0 && !m.thresholds.empty()) {
    m.options.arl_max_steps = sim::default_arl_max_steps(*std::max_element(m.thresholds.begin(), m.thresholds.end()));
  }

  const PhaseModel model = io::load_model(m.model);
  std::vector<sim::ScenarioSpec> scenarios;
  for (const auto& s : m.scenarios) scenarios.push_back(sim::parse_scenario(s));
  const auto report = sim::oc_sweep(model, m.kind, m.rho, m.thresholds, scenarios, m.options, m.seed);

  write_file(m.out + ".csv", io::oc_report_csv(report));
  write_file(m.out + ".json", io::oc_report_json(report).dump(2) + "\n");
  write_file(m.out + ".manifest.json", manifest_json(m).dump(2) + "\n");

  std::cout << std::setw(8) << "b" << std::setw(14) << "arl" << std::setw(10) << "arl_se";
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    std::cout << std::setw(12) << ("wadd" + std::to_string(s)) << std::setw(10) << "se";
  }
  std::cout << "\n";
  int status = kOk;
  for (const auto& row : report.rows) {
    std::cout << std::setw(8) << row.b;
    if (row.arl.n_trials > 0) {
      std::cout << std::setw(14) << row.arl.mean << std::setw(10) << row.arl.std_error;
    } else {
      std::cout << std::setw(14) << "-" << std::setw(10) << "-";
    }
    for (const auto& w : row.wadd) std::cout << std::setw(12) << w.mean << std::setw(10) << w.std_error;
    std::cout << "\n";
  }
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    std::cout << "scenario " << s << ": " << sim::format_scenario(scenarios[s]) << "\n";
  }
  // ARL >= e^b / 2 is guaranteed for WD-CuSum; a violation beyond 3 standard
  // errors means the implementation or the model is wrong.
  if (m.kind == DetectorKind::wdcusum && m.options.arl_trials > 0) {
    for (const auto& row : report.rows) {
      const double bound = std::exp(row.b) / 2.0;
      const bool ok = row.arl.mean >= bound - 3.0 * row.arl.std_error;
      std::cout << (ok ? "certified" : "FAILED") << ": b=" << row.b << " ARL " << row.arl.mean
                << " >= e^b/2 = " << bound << " within 3 se";
      if (row.arl.n_censored > 0) std::cout << " (" << row.arl.n_censored << " censored; lower estimate)";
      std::cout << "\n";
      if (!ok) status = kCertification;
    }
  }
  for (const auto& row : report.rows) {
    std::uint64_t censored = row.arl.n_censored;
    for (const auto& w : row.wadd) censored += w.n_censored;
    if (censored > 0) std::cout << "note: b=" << row.b << " has " << censored << " censored trials\n";
  }
  std::cout << "wrote " << m.out << ".csv, " << m.out << ".json, " << m.out << ".manifest.json\n";
  return status;
}

// ---------------------------------------------------------------- design

struct DesignArgs {
  double gamma = 0.0;
  std::optional<double> alpha;
  std::size_t num_phases = 2;
  std::string kl;
  std::string deltas;
  std::vector<std::string> regimes;
  bool json = false;
};

int cmd_design(const DesignArgs& a) {
  design::CardInput in;
  in.gamma = a.gamma;
  in.alpha = a.alpha;
  in.num_phases = a.num_phases;
  if (!a.kl.empty()) in.kl = parse_list(a.kl, "kl");
  if (!a.deltas.empty()) {
    const auto d = parse_list(a.deltas, "deltas");
    if (d.size() != 2) throw Error(ErrorKind::invalid_argument, "--deltas needs two values d1,d2");
    in.deltas = {{d[0], d[1]}};
  }
  for (const auto& c : a.regimes) in.regimes.push_back(parse_list(c, "c", true));
  const auto card = design::make_card(in);
  if (a.json) {
    std::cout << design::card_json(card).dump(2) << "\n";
  } else {
    std::cout << design::card_text(card);
  }
  return kOk;
}

// ---------------------------------------------------------------- validate

struct ValidateArgs {
  std::string model;
  std::uint64_t seed = 1;
  std::string rho;
  std::size_t streams = 1000;
  std::size_t window = 25;
  std::size_t martingale_streams = 100000;
};

int cmd_validate(const ValidateArgs& a) {
  const PhaseModel model = io::load_model(a.model);
  validation::Options opt;
  opt.seed = a.seed;
  opt.n_streams = a.streams;
  opt.window = a.window;
  opt.martingale_streams = a.martingale_streams;
  if (!a.rho.empty()) opt.rho = parse_list(a.rho, "rho");
  DetectorConfig{DetectorKind::wdcusum, 1.0, validation::resolve_rho(model, opt.rho)}.validate(model.num_phases());
  if (opt.window < 1 || opt.window > oracle::kMaxWindow) {
    throw Error(ErrorKind::invalid_argument, "--window must lie in 1..30");
  }
  if (opt.martingale_streams < 2) throw Error(ErrorKind::invalid_argument, "--martingale-streams must be at least 2");

  std::optional<validation::PropertyResult> first_failure;
  for (const auto& r : validation::run_all(model, opt)) {
    std::cout << (r.skipped ? "SKIP" : r.passed ? "PASS" : "FAIL") << "  " << r.name << ": " << r.detail << "\n";
    if (!r.passed && !first_failure) first_failure = r;
  }
  if (first_failure) {
    std::cout << "first failure: " << first_failure->name << "; replay with --seed " << a.seed;
    if (first_failure->failing_stream) std::cout << " (stream " << *first_failure->failing_stream << ")";
    std::cout << "\n";
    return kCertification;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quickest detection of transient changes followed by a persistent change"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  auto add_seed = [&](CLI::App* sub) {
    return sub->add_option("--seed", seed, "Master seed (falls back to $QCD_SEED, then 1)")->envname("QCD_SEED");
  };

  DetectArgs detect;
  auto* d = app.add_subcommand("detect", "Run a detector over observations from stdin or --input");
  d->add_option("--model", detect.model, "Model JSON file")->required();
  d->add_option("--kind", detect.kind, "dcusum, wdcusum or cusum")->capture_default_str();
  d->add_option("--threshold", detect.threshold, "Threshold b")->required();
  d->add_option("--rho", detect.rho, "WD-CuSum weights rho_1,...,rho_{L-1}");
  d->add_option("--input", detect.input, "Read observations from FILE instead of stdin");
  d->add_option("--csv-column", detect.csv_column, "Take observations from this CSV column");
  d->add_flag("--trace", detect.trace, "Print k,statistic,regenerated for every sample");

  SimulateArgs simulate;
  auto* s = app.add_subcommand("simulate", "Estimate ARL and WADD over a threshold sweep");
  s->add_option("--manifest", simulate.manifest, "Run manifest JSON (as written by a previous run)");
  s->add_option("--model", simulate.model, "Model JSON file");
  s->add_option("--kind", simulate.kind, "dcusum, wdcusum or cusum")->capture_default_str();
  s->add_option("--threshold", simulate.thresholds, "Ascending thresholds b1,b2,...");
  s->add_option("--rho", simulate.rho, "WD-CuSum weights rho_1,...,rho_{L-1}");
  s->add_option("--scenario", simulate.scenarios, "WADD scenario 'v1=1;d=INT|inf[,...]' (repeatable)");
  add_seed(s);
  s->add_option("--trials", simulate.trials, "WADD trials per scenario")->capture_default_str();
  s->add_option("--arl-trials", simulate.arl_trials, "ARL trials (0 skips ARL)")->capture_default_str();
  s->add_option("--max-steps", simulate.max_steps, "WADD censoring horizon")->capture_default_str();
  s->add_option("--arl-max-steps", simulate.arl_max_steps, "ARL censoring horizon (default 50 e^b)");
  s->add_option("--out", simulate.out, "Output prefix for .csv, .json and .manifest.json");
  s->add_option("--threads", simulate.threads, "Worker threads (0: all cores); does not affect results");

  DesignArgs design_args;
  std::optional<double> alpha;
  auto* g = app.add_subcommand("design", "Thresholds and weight range for a target ARL");
  g->add_option("--gamma", design_args.gamma, "Target ARL, > 1")->required();
  g->add_option("--alpha", alpha, "Certified regeneration tail exponent");
  g->add_option("--L", design_args.num_phases, "Number of post-change phases")->capture_default_str();
  g->add_option("--kl", design_args.kl, "KL numbers I_1,...,I_L");
  g->add_option("--deltas", design_args.deltas, "delta1,delta2 in (0,1)");
  g->add_option("--c", design_args.regimes, "Regime vector c_1,...,c_{L-1} for a WADD prediction (repeatable)");
  g->add_flag("--json", design_args.json, "Structured output");

  ValidateArgs validate;
  auto* v = app.add_subcommand("validate", "Run the short-window property suite on a model");
  v->add_option("--model", validate.model, "Model JSON file")->required();
  add_seed(v);
  v->add_option("--rho", validate.rho, "WD-CuSum weights (default 0.02 each)");
  v->add_option("--streams", validate.streams, "Random streams per property")->capture_default_str();
  v->add_option("--window", validate.window, "Stream length, at most 30")->capture_default_str();
  v->add_option("--martingale-streams", validate.martingale_streams, "Streams for the martingale mean")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    if (*d) return cmd_detect(detect);
    if (*s) {
      simulate.seed = seed;
      return cmd_simulate(simulate, *s);
    }
    if (*g) {
      design_args.alpha = alpha;
      return cmd_design(design_args);
    }
    if (*v) {
      validate.seed = seed;
      return cmd_validate(validate);
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kValidation;
}
