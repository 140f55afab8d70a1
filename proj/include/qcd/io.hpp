#pragma once

// Text formats: model description JSON, and the CSV/JSON operating
// characteristic report.

#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcd/error.hpp"
#include "qcd/models.hpp"
#include "qcd/simulate.hpp"

namespace qcd::io {

using nlohmann::json;

/// Shortest round-trip decimal form; identical across runs for identical bits.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), ptr);
}

inline Density density_from_json(const json& j) {
  require(j.is_object() && j.contains("family"), ErrorKind::invalid_model, "density entry needs a 'family'");
  const auto family = j.at("family").get<std::string>();
  if (family == "gaussian") {
    return Gaussian{j.at("mean").get<double>(), j.at("stdev").get<double>()};
  }
  if (family == "step") {
    return PiecewiseConstant{j.at("breakpoints").get<std::vector<double>>(), j.at("heights").get<std::vector<double>>()};
  }
  throw Error(ErrorKind::invalid_model, "unknown density family '" + family + "'");
}

inline json density_to_json(const Density& d) {
  if (d.is_gaussian()) return {{"family", "gaussian"}, {"mean", d.gaussian().mean}, {"stdev", d.gaussian().stdev}};
  return {{"family", "step"}, {"breakpoints", d.step().breakpoints}, {"heights", d.step().heights}};
}

/// {"L": int, "densities": [...]} with densities[0] = f0 and densities[L] = f_L.
inline PhaseModel model_from_json(const json& j) {
  try {
    require(j.is_object() && j.contains("L") && j.contains("densities"), ErrorKind::invalid_model,
            "model needs 'L' and 'densities'");
    const auto L = j.at("L").get<long long>();
    require(L >= 1, ErrorKind::invalid_model, "L must be a positive integer");
    const auto& arr = j.at("densities");
    require(arr.is_array() && arr.size() == static_cast<std::size_t>(L) + 1, ErrorKind::invalid_model,
            "densities must have exactly L+1 entries");
    std::vector<Density> densities;
    densities.reserve(arr.size());
    for (const auto& d : arr) densities.push_back(density_from_json(d));
    return PhaseModel(std::move(densities));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_model, e.what());
  }
}

inline json model_to_json(const PhaseModel& model) {
  json arr = json::array();
  for (const auto& d : model.densities()) arr.push_back(density_to_json(d));
  return {{"L", model.num_phases()}, {"densities", arr}};
}

inline PhaseModel load_model(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::invalid_model, "cannot open model file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_model, "model file '" + path + "': " + e.what());
  }
  return model_from_json(j);
}

inline constexpr const char* kOcCsvHeader = "b,arl,arl_se,scenario_id,wadd,wadd_se,n_trials,n_censored";

namespace detail {

struct FlatRow {
  const sim::OcRow* row;
  std::optional<std::size_t> scenario;
};

inline std::vector<FlatRow> flatten(const sim::OcReport& report) {
  std::vector<FlatRow> out;
  for (const auto& row : report.rows) {
    if (report.scenarios.empty()) {
      out.push_back({&row, std::nullopt});
    } else {
      for (std::size_t s = 0; s < report.scenarios.size(); ++s) out.push_back({&row, s});
    }
  }
  return out;
}

}  // namespace detail

/// One line per (threshold, scenario). n_trials and n_censored count both the
/// ARL trials and that scenario's WADD trials. Fields of an estimate that was
/// not run are left empty.
inline std::string oc_report_csv(const sim::OcReport& report) {
  std::ostringstream out;
  out << kOcCsvHeader << '\n';
  for (const auto& [row, s] : detail::flatten(report)) {
    out << format_double(row->b) << ',';
    if (row->arl.n_trials > 0) {
      out << format_double(row->arl.mean) << ',' << format_double(row->arl.std_error) << ',';
    } else {
      out << ",,";
    }
    std::uint64_t trials = row->arl.n_trials;
    std::uint64_t censored = row->arl.n_censored;
    if (s) {
      const auto& w = row->wadd[*s];
      out << *s << ',' << format_double(w.mean) << ',' << format_double(w.std_error) << ',';
      trials += w.n_trials;
      censored += w.n_censored;
    } else {
      out << ",,,";
    }
    out << trials << ',' << censored << '\n';
  }
  return out.str();
}

inline json oc_report_json(const sim::OcReport& report) {
  json rows = json::array();
  for (const auto& [row, s] : detail::flatten(report)) {
    json r{{"b", row->b}, {"arl_trials", row->arl.n_trials}, {"arl_censored", row->arl.n_censored}};
    if (row->arl.n_trials > 0) {
      r["arl"] = row->arl.mean;
      r["arl_se"] = row->arl.std_error;
    } else {
      r["arl"] = nullptr;
      r["arl_se"] = nullptr;
    }
    std::uint64_t trials = row->arl.n_trials;
    std::uint64_t censored = row->arl.n_censored;
    if (s) {
      const auto& w = row->wadd[*s];
      r["scenario_id"] = *s;
      r["wadd"] = w.mean;
      r["wadd_se"] = w.std_error;
      r["wadd_trials"] = w.n_trials;
      r["wadd_censored"] = w.n_censored;
      r["phase_histogram"] = w.phase_histogram;
      trials += w.n_trials;
      censored += w.n_censored;
    } else {
      r["scenario_id"] = nullptr;
      r["wadd"] = nullptr;
      r["wadd_se"] = nullptr;
    }
    r["n_trials"] = trials;
    r["n_censored"] = censored;
    rows.push_back(std::move(r));
  }
  json scenarios = json::array();
  for (const auto& sc : report.scenarios) scenarios.push_back(sim::format_scenario(sc));
  return {{"kind", std::string(to_string(report.kind))},
          {"rho", report.rho},
          {"master_seed", report.master_seed},
          {"arl_max_steps", report.arl_max_steps},
          {"wadd_max_steps", report.wadd_max_steps},
          {"scenarios", scenarios},
          {"rows", rows}};
}

}  // namespace qcd::io
