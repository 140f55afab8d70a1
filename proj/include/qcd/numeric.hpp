#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace qcd {

/// Stand-in for log(0) in likelihood-ratio arithmetic. Anything carrying it
/// compares below every legitimate statistic without producing NaN.
inline constexpr double kLogZero = -1e12;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// log(sum_i exp(xs[i])); -inf entries are allowed and contribute nothing.
inline double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -kInf;
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

/// Streaming log-sum-exp accumulator; rescales whenever a larger term arrives
/// so no intermediate exp() overflows.
class LogSumExp {
 public:
  void add(double x) {
    if (x == -kInf) return;
    if (x <= max_) {
      sum_ += std::exp(x - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - x) + 1.0;
      max_ = x;
    }
  }

  [[nodiscard]] double value() const { return sum_ == 0.0 ? -kInf : max_ + std::log(sum_); }

 private:
  double max_ = -kInf;
  double sum_ = 0.0;
};

struct MinimizeResult {
  double x;
  double value;
};

// Golden-section search for a unimodal f on [lo, hi], stopping once the
// bracket is narrower than tol.
template <typename F>
MinimizeResult golden_section_minimize(F&& f, double lo, double hi, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  const double x = 0.5 * (a + b);
  return {x, f(x)};
}

}  // namespace qcd
