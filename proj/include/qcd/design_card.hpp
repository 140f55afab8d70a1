#pragma once

// Threshold and weight recommendations for a target ARL, as plain text or
// JSON.

#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qcd/design.hpp"
#include "qcd/error.hpp"
#include "qcd/io.hpp"

namespace qcd::design {

struct CardInput {
  double gamma = 0.0;
  std::optional<double> alpha;
  std::size_t num_phases = 2;
  std::vector<double> kl;                       // I_1..I_L; may be empty
  std::optional<std::pair<double, double>> deltas;
  std::vector<RegimeVector> regimes;            // c vectors to evaluate
};

struct Card {
  CardInput input;
  double wdcusum_b = 0.0;
  std::optional<double> dcusum_b;
  std::string dcusum_note;
  std::optional<double> rho_b;  // threshold the rho range was computed at
  std::optional<RhoRange> rho;
  std::string rho_note;
  std::vector<std::pair<RegimeVector, double>> predictions;
};

inline constexpr double kQuotedUpperTypo = 0.134;

inline Card make_card(const CardInput& in) {
  require(in.gamma > 1.0 && std::isfinite(in.gamma), ErrorKind::invalid_argument, "gamma must exceed 1");
  require(in.num_phases >= 1, ErrorKind::invalid_argument, "L must be at least 1");
  require(in.kl.empty() || in.kl.size() == in.num_phases, ErrorKind::invalid_argument,
          "--kl needs exactly L values");
  for (double v : in.kl) require(v > 0.0 && std::isfinite(v), ErrorKind::invalid_argument, "KL values must be positive");
  if (in.alpha) require(*in.alpha > 0.0, ErrorKind::invalid_argument, "alpha must be positive");
  if (in.deltas) {
    const auto [d1, d2] = *in.deltas;
    require(d1 > 0.0 && d1 < 1.0 && d2 > 0.0 && d2 < 1.0, ErrorKind::invalid_argument, "deltas must lie in (0, 1)");
  }

  Card card;
  card.input = in;
  card.wdcusum_b = wdcusum_threshold(in.gamma);
  if (in.alpha) {
    card.dcusum_b = dcusum_threshold(in.gamma, *in.alpha, in.num_phases);
  } else {
    card.dcusum_note = "unavailable: regeneration tail condition not certified (pass --alpha)";
  }

  if (in.num_phases < 2) {
    card.rho_note = "not applicable for L = 1";
  } else if (!in.deltas || in.kl.empty()) {
    card.rho_note = "needs --kl and --deltas";
  } else {
    // The recommendation is stated for a threshold of size log(gamma).
    card.rho_b = std::log(in.gamma);
    try {
      card.rho = rho_range(*card.rho_b, in.kl[0], in.deltas->first, in.deltas->second);
    } catch (const Error& e) {
      card.rho_note = e.what();
    }
    if (card.rho) {
      const double hi = card.rho->hi;
      if (std::abs(hi * 10.0 - kQuotedUpperTypo) < 5e-4) {
        card.rho_note = "upper endpoint 1 - exp(-delta1*I1) = " + io::format_double(hi) +
                        "; the value 0.134 sometimes quoted for these inputs is 10 times too large";
      }
    }
  }

  for (const auto& c : in.regimes) {
    require(!in.kl.empty(), ErrorKind::invalid_argument, "WADD predictions need --kl");
    require(c.size() + 1 == in.num_phases, ErrorKind::invalid_argument, "each --c vector needs L-1 values");
    card.predictions.emplace_back(c, asymptotic_wadd(in.gamma, c, in.kl));
  }
  return card;
}

namespace detail {

inline std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + io::format_double(v[i]);
  return out;
}

}  // namespace detail

inline std::string card_text(const Card& card) {
  std::ostringstream out;
  const auto& in = card.input;
  out << "gamma            " << io::format_double(in.gamma) << "\n";
  out << "L                " << in.num_phases << "\n";
  if (!in.kl.empty()) out << "KL               " << detail::join(in.kl) << "\n";
  out << "wdcusum b        " << io::format_double(card.wdcusum_b) << "\n";
  out << "dcusum b         ";
  if (card.dcusum_b) {
    out << io::format_double(*card.dcusum_b) << " (alpha " << io::format_double(*in.alpha) << ")\n";
  } else {
    out << card.dcusum_note << "\n";
  }
  out << "rho_1 range      ";
  if (card.rho) {
    out << "(" << io::format_double(card.rho->lo) << ", " << io::format_double(card.rho->hi) << ") at b = "
        << io::format_double(*card.rho_b) << "\n";
    if (!card.rho_note.empty()) out << "note             " << card.rho_note << "\n";
  } else {
    out << card.rho_note << "\n";
  }
  for (const auto& [c, w] : card.predictions) {
    out << "wadd c=" << detail::join(c) << "  " << io::format_double(w) << "\n";
  }
  return out.str();
}

inline nlohmann::json card_json(const Card& card) {
  using nlohmann::json;
  const auto& in = card.input;
  json j{{"gamma", in.gamma}, {"L", in.num_phases}, {"kl", in.kl}, {"wdcusum_b", card.wdcusum_b}};
  j["alpha"] = in.alpha ? json(*in.alpha) : json(nullptr);
  if (card.dcusum_b) {
    j["dcusum_b"] = *card.dcusum_b;
  } else {
    j["dcusum_b"] = nullptr;
    j["dcusum_note"] = card.dcusum_note;
  }
  if (card.rho) {
    j["rho_range"] = {{"lo", card.rho->lo}, {"hi", card.rho->hi}, {"b", *card.rho_b}};
  } else {
    j["rho_range"] = nullptr;
  }
  if (!card.rho_note.empty()) j["rho_note"] = card.rho_note;
  json preds = json::array();
  for (const auto& [c, w] : card.predictions) {
    json cj = json::array();
    for (double v : c) cj.push_back(std::isinf(v) ? json("inf") : json(v));
    preds.push_back({{"c", cj}, {"wadd", w}});
  }
  j["wadd_predictions"] = preds;
  return j;
}

}  // namespace qcd::design
