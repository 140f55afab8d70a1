#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "qcd/error.hpp"
#include "qcd/numeric.hpp"

namespace qcd::design {

/// Threshold guaranteeing ARL >= gamma for WD-CuSum, from ARL >= e^b / 2.
inline double wdcusum_threshold(double gamma) {
  require(gamma > 1.0 && std::isfinite(gamma), ErrorKind::invalid_argument, "gamma must exceed 1");
  return std::log(gamma) + std::log(2.0);
}

/// log of the D-CuSum ARL lower bound e^b / (1 + (b/alpha)^(L+1)).
inline double dcusum_log_arl_bound(double b, double alpha, std::size_t num_phases) {
  const double r = static_cast<double>(num_phases + 1) * std::log(b / alpha);
  // log(1 + e^r) without overflow
  const double log_penalty = r > 0.0 ? r + std::log1p(std::exp(-r)) : std::log1p(std::exp(r));
  return b - log_penalty;
}

/// Solves e^b / (1 + (b/alpha)^(L+1)) = gamma on the branch b >= log(gamma) by
/// bisection to absolute tolerance 1e-9.
inline double dcusum_threshold(double gamma, double alpha, std::size_t num_phases) {
  require(gamma > 1.0 && std::isfinite(gamma), ErrorKind::invalid_argument, "gamma must exceed 1");
  require(alpha > 0.0, ErrorKind::invalid_argument, "alpha must be positive");
  require(num_phases >= 1, ErrorKind::invalid_argument, "L must be at least 1");
  const double log_gamma = std::log(gamma);
  const double lo = log_gamma;
  const double hi = log_gamma + static_cast<double>(num_phases + 1) * std::log1p(log_gamma / alpha) + 10.0;
  auto f = [&](double b) { return dcusum_log_arl_bound(b, alpha, num_phases) - log_gamma; };
  // The penalty can vanish in double precision when alpha >> log(gamma).
  if (f(lo) >= 0.0) return lo;
  if (!(f(hi) > 0.0)) {
    throw Error(ErrorKind::no_root, "D-CuSum threshold bracket does not straddle the root");
  }
  auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-9; };
  const auto [a, b] = boost::math::tools::bisect(f, lo, hi, tol);
  return 0.5 * (a + b);
}

struct RhoRange {
  double lo;
  double hi;
};

/// exp(-delta2 b) < rho_1 < 1 - exp(-delta1 I_1).
inline RhoRange rho_range(double b, double kl1, double delta1, double delta2) {
  require(b > 0.0, ErrorKind::invalid_argument, "b must be positive");
  require(kl1 > 0.0, ErrorKind::invalid_argument, "I_1 must be positive");
  require(delta1 > 0.0 && delta1 < 1.0 && delta2 > 0.0 && delta2 < 1.0, ErrorKind::invalid_argument,
          "deltas must lie in (0, 1)");
  const RhoRange r{std::exp(-delta2 * b), -std::expm1(-delta1 * kl1)};
  if (r.lo >= r.hi) {
    throw Error(ErrorKind::empty_range, "rho range is empty: lower " + std::to_string(r.lo) +
                                            " >= upper " + std::to_string(r.hi));
  }
  return r;
}

/// c_i for i = 1..L-1; c_L = infinity is implicit.
using RegimeVector = std::vector<double>;

/// First-order delay log(gamma) * (sum_{i<h} c_i/I_i + (1 - sum_{i<h} c_i)/I_h),
/// with h the first index whose cumulative c reaches 1.
inline double asymptotic_wadd(double gamma, const RegimeVector& c, const std::vector<double>& kl) {
  require(gamma > 1.0, ErrorKind::invalid_argument, "gamma must exceed 1");
  require(!kl.empty() && c.size() + 1 == kl.size(), ErrorKind::invalid_argument,
          "need L information numbers and L-1 regime constants");
  for (double info : kl) require(info > 0.0, ErrorKind::invalid_argument, "KL numbers must be positive");
  for (double ci : c) require(ci >= 0.0, ErrorKind::invalid_argument, "regime constants must be non-negative");
  const double log_gamma = std::log(gamma);
  double used = 0.0;  // sum_{i<h} c_i
  double slope = 0.0;  // sum_{i<h} c_i / I_i
  for (std::size_t i = 0; i < kl.size(); ++i) {
    const double ci = i < c.size() ? c[i] : kInf;
    if (used + ci >= 1.0) return log_gamma * (slope + (1.0 - used) / kl[i]);
    used += ci;
    slope += ci / kl[i];
  }
  return log_gamma * slope;  // unreachable: c_L = infinity
}

/// Plug-in c_i = d_i I_i / log(gamma) (infinite durations give infinite c_i).
inline RegimeVector regime_vector(const std::vector<double>& durations, double gamma,
                                  const std::vector<double>& kl) {
  require(gamma > 1.0, ErrorKind::invalid_argument, "gamma must exceed 1");
  require(durations.size() <= kl.size(), ErrorKind::invalid_argument, "more durations than phases");
  RegimeVector c;
  c.reserve(durations.size());
  const double log_gamma = std::log(gamma);
  for (std::size_t i = 0; i < durations.size(); ++i) {
    require(durations[i] >= 0.0, ErrorKind::invalid_argument, "durations must be non-negative");
    c.push_back(std::isinf(durations[i]) ? kInf : durations[i] * kl[i] / log_gamma);
  }
  return c;
}

}  // namespace qcd::design
