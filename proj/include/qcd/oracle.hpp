#pragma once

// Exhaustive reference statistics. Every function here enumerates change-point
// tuples directly and costs O(k^L); they exist to validate the recursive
// detectors on short windows and are never used on live streams.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qcd/error.hpp"
#include "qcd/models.hpp"
#include "qcd/numeric.hpp"

namespace qcd::oracle {

inline constexpr std::size_t kMaxWindow = 30;
inline constexpr std::size_t kMaxPhases = 3;

struct TupleStat {
  double value = 0.0;  // positive part of the maximum
  double raw = 0.0;    // maximum before flooring
  std::vector<std::size_t> argmax;  // (v_1, ..., v_L), 1-based
};

/// Z_i(X_j) for i = 1..L, j = 1..k.
class LlrTable {
 public:
  LlrTable(const PhaseModel& model, std::span<const double> samples)
      : num_phases_(model.num_phases()), k_(samples.size()), z_(num_phases_ * k_) {
    for (std::size_t j = 0; j < k_; ++j) {
      for (std::size_t i = 1; i <= num_phases_; ++i) z_[(i - 1) * k_ + j] = model.llr(i, samples[j]);
    }
  }

  // Direct construction from LLR rows, row i-1 holding Z_i(X_1..X_k).
  explicit LlrTable(const std::vector<std::vector<double>>& rows)
      : num_phases_(rows.size()), k_(rows.empty() ? 0 : rows.front().size()) {
    for (const auto& r : rows) {
      require(r.size() == k_, ErrorKind::invalid_argument, "LLR rows must have equal length");
      z_.insert(z_.end(), r.begin(), r.end());
    }
  }

  [[nodiscard]] std::size_t num_phases() const noexcept { return num_phases_; }
  [[nodiscard]] std::size_t size() const noexcept { return k_; }
  // phase i in 1..L, sample j in 1..k
  [[nodiscard]] double z(std::size_t i, std::size_t j) const { return z_[(i - 1) * k_ + (j - 1)]; }

 private:
  std::size_t num_phases_;
  std::size_t k_;
  std::vector<double> z_;
};

namespace detail {

inline void check_window(std::size_t k, std::size_t num_phases) {
  require(k >= 1, ErrorKind::invalid_argument, "oracle needs at least one sample");
  require(k <= kMaxWindow && num_phases <= kMaxPhases, ErrorKind::window_too_large,
          "oracle limited to k <= 30 and L <= 3 (got k=" + std::to_string(k) + ", L=" +
              std::to_string(num_phases) + ")");
}

// range[i][a][b] = sum_{j=a}^{b} (Z_i(X_j) + shift_i), summed left to right,
// for 1 <= a <= b <= k. Zero for empty ranges.
class RangeSums {
 public:
  RangeSums(const LlrTable& table, std::size_t k, std::span<const double> shift)
      : k_(k), sums_(table.num_phases() * (k + 2) * (k + 2), 0.0) {
    for (std::size_t i = 1; i <= table.num_phases(); ++i) {
      for (std::size_t a = 1; a <= k; ++a) {
        double s = 0.0;
        for (std::size_t b = a; b <= k; ++b) {
          s += table.z(i, b) + shift[i - 1];
          at(i, a, b) = s;
        }
      }
    }
  }

  [[nodiscard]] double sum(std::size_t i, std::size_t a, std::size_t b) const {
    return a > b ? 0.0 : sums_[index(i, a, b)];
  }

 private:
  [[nodiscard]] std::size_t index(std::size_t i, std::size_t a, std::size_t b) const {
    return ((i - 1) * (k_ + 2) + a) * (k_ + 2) + b;
  }
  double& at(std::size_t i, std::size_t a, std::size_t b) { return sums_[index(i, a, b)]; }

  std::size_t k_;
  std::vector<double> sums_;
};

// Visits every tuple 1 <= v_1 <= k, v_1 <= v_2 <= ... <= v_L <= k+1 in
// lexicographic order.
template <typename Visit>
void for_each_tuple(std::size_t k, std::size_t num_phases, Visit&& visit) {
  std::vector<std::size_t> v(num_phases);
  auto recurse = [&](auto&& self, std::size_t depth, std::size_t lo) -> void {
    if (depth == num_phases) {
      visit(std::as_const(v));
      return;
    }
    const std::size_t hi = depth == 0 ? k : k + 1;
    for (std::size_t x = lo; x <= hi; ++x) {
      v[depth] = x;
      self(self, depth + 1, x);
    }
  };
  recurse(recurse, 0, 1);
}

// log of the (possibly weighted) likelihood ratio for one tuple at time k.
inline double tuple_log_ratio(const RangeSums& sums, std::span<const std::size_t> v, std::size_t k,
                              std::span<const double> log_rho) {
  const std::size_t L = v.size();
  double total = 0.0;
  for (std::size_t i = 1; i <= L; ++i) {
    const std::size_t start = v[i - 1];
    const std::size_t next = i < L ? v[i] : k + 1;  // v_{L+1} = infinity
    total += sums.sum(i, start, std::min(next - 1, k));
    if (i < L && k >= next) total += log_rho[i - 1];
  }
  return total;
}

inline TupleStat maximize(const LlrTable& table, std::size_t k, std::span<const double> stay,
                          std::span<const double> log_rho) {
  const RangeSums sums(table, k, stay);
  TupleStat best;
  best.raw = -kInf;
  for_each_tuple(k, table.num_phases(), [&](const std::vector<std::size_t>& v) {
    const double value = tuple_log_ratio(sums, v, k, log_rho);
    if (value > best.raw) {
      best.raw = value;
      best.argmax = v;
    }
  });
  best.value = std::max(best.raw, 0.0);
  return best;
}

}  // namespace detail

/// Number of tuples the oracles enumerate at time k: C(k+L, L) - 1.
inline std::uint64_t tuple_count(std::size_t k, std::size_t num_phases) {
  // C(n, r) computed incrementally; exact for the small arguments used here.
  std::uint64_t c = 1;
  for (std::size_t r = 1; r <= num_phases; ++r) c = c * (k + r) / r;
  return c - 1;
}

/// (W_hat[k])^+ by enumeration over the first `k` samples of `table`.
inline TupleStat glr_bruteforce(const LlrTable& table, std::size_t k) {
  detail::check_window(k, table.num_phases());
  require(k <= table.size(), ErrorKind::invalid_argument, "window longer than the sample table");
  const std::vector<double> zeros(table.num_phases(), 0.0);
  return detail::maximize(table, k, zeros, zeros);
}

inline TupleStat glr_bruteforce(const PhaseModel& model, std::span<const double> samples) {
  detail::check_window(samples.size(), model.num_phases());
  return glr_bruteforce(LlrTable(model, samples), samples.size());
}

/// (W_tilde[k])^+ with geometric duration weights rho_1..rho_{L-1}.
inline TupleStat weighted_glr_bruteforce(const LlrTable& table, std::span<const double> rho, std::size_t k) {
  detail::check_window(k, table.num_phases());
  require(k <= table.size(), ErrorKind::invalid_argument, "window longer than the sample table");
  const std::size_t L = table.num_phases();
  require(rho.size() + 1 == L, ErrorKind::invalid_argument, "need L-1 weights");
  std::vector<double> stay(L, 0.0);  // log(1 - rho_L) = 0
  std::vector<double> log_rho(L, 0.0);
  for (std::size_t i = 1; i < L; ++i) {
    stay[i - 1] = std::log(1.0 - rho[i - 1]);
    log_rho[i - 1] = std::log(rho[i - 1]);
  }
  return detail::maximize(table, k, stay, log_rho);
}

inline TupleStat weighted_glr_bruteforce(const PhaseModel& model, std::span<const double> rho,
                                         std::span<const double> samples) {
  detail::check_window(samples.size(), model.num_phases());
  return weighted_glr_bruteforce(LlrTable(model, samples), rho, samples.size());
}

/// Probability mass function of the transient duration d_1 on {0, 1, ...},
/// tabulated on 0..n-1 with the remaining mass held as an explicit tail.
class DurationPmf {
 public:
  explicit DurationPmf(std::vector<double> probs) : probs_(std::move(probs)) {
    double s = 0.0;
    for (double p : probs_) {
      require(p >= 0.0, ErrorKind::invalid_argument, "pmf entries must be non-negative");
      s += p;
    }
    require(s <= 1.0 + 1e-12, ErrorKind::invalid_argument, "pmf mass exceeds 1");
    // suffix sums give exact tails without cancellation
    tails_.assign(probs_.size() + 1, 0.0);
    tails_[probs_.size()] = std::max(0.0, 1.0 - s);
    for (std::size_t d = probs_.size(); d-- > 0;) tails_[d] = tails_[d + 1] + probs_[d];
  }

  /// g(d) = rho (1-rho)^d, tabulated on 0..n-1; tail (1-rho)^n.
  static DurationPmf geometric(double rho, std::size_t n) {
    require(rho > 0.0 && rho < 1.0, ErrorKind::invalid_argument, "rho must lie in (0, 1)");
    DurationPmf g;
    g.probs_.resize(n);
    g.tails_.resize(n + 1);
    for (std::size_t d = 0; d < n; ++d) g.probs_[d] = rho * std::pow(1.0 - rho, static_cast<double>(d));
    for (std::size_t d = 0; d <= n; ++d) g.tails_[d] = std::pow(1.0 - rho, static_cast<double>(d));
    return g;
  }

  [[nodiscard]] std::size_t size() const noexcept { return probs_.size(); }
  [[nodiscard]] double log_pmf(std::size_t d) const {
    require(d < probs_.size(), ErrorKind::invalid_argument, "duration beyond tabulated range");
    return probs_[d] > 0.0 ? std::log(probs_[d]) : -kInf;
  }
  /// log G(x) = log sum_{d > x} g(d).
  [[nodiscard]] double log_tail(std::size_t x) const {
    require(x + 1 < tails_.size(), ErrorKind::invalid_argument, "duration beyond tabulated range");
    const double t = tails_[x + 1];
    return t > 0.0 ? std::log(t) : -kInf;
  }

 private:
  DurationPmf() = default;

  std::vector<double> probs_;
  std::vector<double> tails_;  // tails_[d] = sum_{d' >= d} g(d')
};

namespace detail {

// Calls visit(v1, log_term) for every term of the L = 2 mixture at time k:
// g(d) Lambda_1[v1, v1+d) Lambda_2[v1+d, k] for d = 0..k-v1, and the tail
// G(k-v1) Lambda_1[v1, k].
template <typename Visit>
void for_each_mixture_term(const LlrTable& table, const DurationPmf& g, std::size_t k, Visit&& visit) {
  require(table.num_phases() == 2, ErrorKind::unsupported_l, "mixture statistics are defined for L = 2");
  check_window(k, 2);
  require(k <= table.size(), ErrorKind::invalid_argument, "window longer than the sample table");
  require(g.size() >= k, ErrorKind::invalid_argument, "pmf must be tabulated up to at least k-1");
  const std::vector<double> zeros(2, 0.0);
  const RangeSums sums(table, k, zeros);
  for (std::size_t v1 = 1; v1 <= k; ++v1) {
    for (std::size_t d = 0; d <= k - v1; ++d) {
      const std::size_t v2 = v1 + d;
      visit(v1, g.log_pmf(d) + sums.sum(1, v1, v2 - 1) + sums.sum(2, v2, k));
    }
    visit(v1, g.log_tail(k - v1) + sums.sum(1, v1, k));
  }
}

}  // namespace detail

/// W'[k] = max_{v1} log( sum_d g(d) Gamma(k, v1, d) ), L = 2 only.
inline double mixture_glr(const LlrTable& table, const DurationPmf& g, std::size_t k) {
  std::vector<LogSumExp> per_v1(k + 1);
  detail::for_each_mixture_term(table, g, k, [&](std::size_t v1, double term) { per_v1[v1].add(term); });
  double best = -kInf;
  for (std::size_t v1 = 1; v1 <= k; ++v1) best = std::max(best, per_v1[v1].value());
  return best;
}

inline double mixture_glr(const PhaseModel& model, const DurationPmf& g, std::span<const double> samples) {
  require(model.num_phases() == 2, ErrorKind::unsupported_l, "mixture statistics are defined for L = 2");
  detail::check_window(samples.size(), 2);
  return mixture_glr(LlrTable(model, samples), g, samples.size());
}

/// log R[k], the mixture Shiryaev-Roberts statistic sum_{v1} sum_d g(d) Gamma(k, v1, d).
inline double mixture_sr_statistic(const LlrTable& table, const DurationPmf& g, std::size_t k) {
  LogSumExp total;
  detail::for_each_mixture_term(table, g, k, [&](std::size_t, double term) { total.add(term); });
  return total.value();
}

inline double mixture_sr_statistic(const PhaseModel& model, const DurationPmf& g,
                                   std::span<const double> samples) {
  require(model.num_phases() == 2, ErrorKind::unsupported_l, "mixture statistics are defined for L = 2");
  detail::check_window(samples.size(), 2);
  return mixture_sr_statistic(LlrTable(model, samples), g, samples.size());
}

}  // namespace qcd::oracle
