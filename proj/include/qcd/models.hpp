#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "qcd/error.hpp"
#include "qcd/numeric.hpp"
#include "qcd/rng.hpp"

namespace qcd {

struct Gaussian {
  double mean = 0.0;
  double stdev = 1.0;
};

/// Piecewise-constant density. Piece j covers [breakpoints[j], breakpoints[j+1]),
/// except the last piece, which also includes its right end.
struct PiecewiseConstant {
  std::vector<double> breakpoints;
  std::vector<double> heights;
};

class Density {
 public:
  Density(Gaussian g) : family_(g) {  // NOLINT(google-explicit-constructor)
    require(std::isfinite(g.mean), ErrorKind::invalid_model, "gaussian mean must be finite");
    require(g.stdev > 0.0 && std::isfinite(g.stdev), ErrorKind::invalid_model,
            "gaussian stdev must be positive");
    log_norm_ = -std::log(g.stdev) - 0.5 * std::log(2.0 * std::numbers::pi);
  }

  Density(PiecewiseConstant p) : family_(std::move(p)) {  // NOLINT(google-explicit-constructor)
    const auto& pc = std::get<PiecewiseConstant>(family_);
    require(!pc.heights.empty(), ErrorKind::invalid_model, "step density needs at least one piece");
    require(pc.breakpoints.size() == pc.heights.size() + 1, ErrorKind::invalid_model,
            "step density needs exactly one more breakpoint than heights");
    double mass = 0.0;
    for (std::size_t j = 0; j < pc.heights.size(); ++j) {
      const double w = pc.breakpoints[j + 1] - pc.breakpoints[j];
      require(std::isfinite(pc.breakpoints[j]) && std::isfinite(pc.breakpoints[j + 1]) && w > 0.0,
              ErrorKind::invalid_model, "step breakpoints must be finite and strictly ascending");
      require(pc.heights[j] >= 0.0 && std::isfinite(pc.heights[j]), ErrorKind::invalid_model,
              "step heights must be non-negative");
      mass += pc.heights[j] * w;
    }
    require(std::abs(mass - 1.0) <= 1e-12, ErrorKind::invalid_model,
            "step density integrates to " + std::to_string(mass) + ", not 1");
    log_heights_.reserve(pc.heights.size());
    cumulative_.reserve(pc.heights.size());
    double acc = 0.0;
    for (std::size_t j = 0; j < pc.heights.size(); ++j) {
      log_heights_.push_back(pc.heights[j] > 0.0 ? std::log(pc.heights[j]) : -kInf);
      acc += pc.heights[j] * (pc.breakpoints[j + 1] - pc.breakpoints[j]);
      cumulative_.push_back(acc);
    }
  }

  [[nodiscard]] bool is_gaussian() const noexcept { return std::holds_alternative<Gaussian>(family_); }
  [[nodiscard]] const Gaussian& gaussian() const { return std::get<Gaussian>(family_); }
  [[nodiscard]] const PiecewiseConstant& step() const { return std::get<PiecewiseConstant>(family_); }

  // log f(x); -inf outside the support.
  [[nodiscard]] double log_pdf(double x) const {
    if (const auto* g = std::get_if<Gaussian>(&family_)) {
      const double z = (x - g->mean) / g->stdev;
      return log_norm_ - 0.5 * z * z;
    }
    const auto piece = piece_index(x);
    return piece ? log_heights_[*piece] : -kInf;
  }

  [[nodiscard]] double pdf(double x) const { return std::exp(log_pdf(x)); }

  /// Index of the step piece containing x, if any.
  [[nodiscard]] std::optional<std::size_t> piece_index(double x) const {
    const auto& bp = step().breakpoints;
    if (!(x >= bp.front() && x <= bp.back())) return std::nullopt;
    if (x == bp.back()) return bp.size() - 2;
    const auto it = std::upper_bound(bp.begin(), bp.end(), x);
    return static_cast<std::size_t>(it - bp.begin()) - 1;
  }

  /// Support as a closed interval (possibly infinite).
  [[nodiscard]] std::pair<double, double> support() const {
    if (is_gaussian()) return {-kInf, kInf};
    return {step().breakpoints.front(), step().breakpoints.back()};
  }

  template <typename Rng>
  double sample(Rng& rng) const {
    if (const auto* g = std::get_if<Gaussian>(&family_)) {
      std::normal_distribution<double> normal(g->mean, g->stdev);
      return normal(rng);
    }
    const auto& pc = step();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng) * cumulative_.back();
    auto j = static_cast<std::size_t>(std::upper_bound(cumulative_.begin(), cumulative_.end(), u) -
                                      cumulative_.begin());
    j = std::min(j, pc.heights.size() - 1);
    while (pc.heights[j] == 0.0 && j > 0) --j;  // u landed on a zero-mass boundary
    const double lo = pc.breakpoints[j];
    const double hi = pc.breakpoints[j + 1];
    return lo + unit(rng) * (hi - lo);
  }

 private:
  std::variant<Gaussian, PiecewiseConstant> family_;
  double log_norm_ = 0.0;
  std::vector<double> log_heights_;
  std::vector<double> cumulative_;
};

namespace detail {

// Integral of p*log(p/q) over [a, b], where p is positive on (a, b).
template <typename LogP, typename LogQ>
double kl_segment(LogP&& log_p, LogQ&& log_q, double a, double b) {
  using boost::math::quadrature::gauss_kronrod;
  auto integrand = [&](double x) {
    const double lp = log_p(x);
    if (lp == -kInf) return 0.0;
    const double lq = log_q(x);
    if (lq == -kInf) throw Error(ErrorKind::divergent_kl, "numerator density not absolutely continuous");
    return std::exp(lp) * (lp - lq);
  };
  double err = 0.0;
  return gauss_kronrod<double, 61>::integrate(integrand, a, b, 8, 1e-13, &err);
}

inline std::vector<double> merged_breakpoints(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a);
  out.insert(out.end(), b.begin(), b.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace detail

/// KL(p || q) by adaptive Gauss-Kronrod quadrature over the support of p.
/// Accurate to well below 1e-10 for the supported families; used for mixed
/// pairs and as an independent check on the closed forms.
inline double kl_divergence_quadrature(const Density& p, const Density& q) {
  const auto [qlo, qhi] = q.support();
  const auto lp = [&](double x) { return p.log_pdf(x); };
  const auto lq = [&](double x) { return q.log_pdf(x); };
  if (p.is_gaussian()) {
    if (std::isfinite(qlo) || std::isfinite(qhi)) {
      throw Error(ErrorKind::divergent_kl, "gaussian numerator against bounded support");
    }
    const auto& g = p.gaussian();
    // Contribution beyond 14 sd is below 1e-40 for any gaussian reference.
    double total = 0.0;
    for (int j = -14; j < 14; j += 2) {
      total += detail::kl_segment(lp, lq, g.mean + j * g.stdev, g.mean + (j + 2) * g.stdev);
    }
    return total;
  }
  const auto& pc = p.step();
  std::vector<double> cuts = pc.breakpoints;
  if (!q.is_gaussian()) cuts = detail::merged_breakpoints(cuts, q.step().breakpoints);
  double total = 0.0;
  for (std::size_t j = 0; j + 1 < cuts.size(); ++j) {
    const double a = cuts[j];
    const double b = cuts[j + 1];
    if (a < pc.breakpoints.front() || b > pc.breakpoints.back()) continue;
    const double mid = 0.5 * (a + b);
    if (p.log_pdf(mid) == -kInf) continue;
    if (!q.is_gaussian() && q.log_pdf(mid) == -kInf) {
      throw Error(ErrorKind::divergent_kl, "numerator has mass where the reference density is zero");
    }
    total += detail::kl_segment(lp, lq, a, b);
  }
  return total;
}

/// KL(p || q): exact for gaussian/gaussian and step/step, quadrature otherwise.
inline double kl_divergence(const Density& p, const Density& q) {
  if (p.is_gaussian() && q.is_gaussian()) {
    const auto& a = p.gaussian();
    const auto& b = q.gaussian();
    const double dm = a.mean - b.mean;
    return std::log(b.stdev / a.stdev) + (a.stdev * a.stdev + dm * dm) / (2.0 * b.stdev * b.stdev) - 0.5;
  }
  if (!p.is_gaussian() && !q.is_gaussian()) {
    const auto cuts = detail::merged_breakpoints(p.step().breakpoints, q.step().breakpoints);
    double total = 0.0;
    for (std::size_t j = 0; j + 1 < cuts.size(); ++j) {
      const double mid = 0.5 * (cuts[j] + cuts[j + 1]);
      const double lp = p.log_pdf(mid);
      if (lp == -kInf) continue;
      const double lq = q.log_pdf(mid);
      if (lq == -kInf) {
        throw Error(ErrorKind::divergent_kl, "numerator has mass where the reference density is zero");
      }
      total += std::exp(lp) * (cuts[j + 1] - cuts[j]) * (lp - lq);
    }
    return total;
  }
  return kl_divergence_quadrature(p, q);
}

/// Pre-change density f0, transient densities f1..f_{L-1} and persistent f_L.
class PhaseModel {
 public:
  explicit PhaseModel(std::vector<Density> densities) : densities_(std::move(densities)) {
    require(densities_.size() >= 2, ErrorKind::invalid_model, "need at least f0 and one post-change density");
    kl_.reserve(densities_.size() - 1);
    for (std::size_t i = 1; i < densities_.size(); ++i) {
      double info = 0.0;
      try {
        info = kl_divergence(densities_[i], densities_[0]);
      } catch (const Error& e) {
        throw Error(ErrorKind::invalid_model, "phase " + std::to_string(i) + ": " + e.what());
      }
      require(std::isfinite(info) && info > 0.0, ErrorKind::invalid_model,
              "phase " + std::to_string(i) + " has KL divergence " + std::to_string(info) +
                  "; it must be positive and finite");
      kl_.push_back(info);
    }
  }

  [[nodiscard]] std::size_t num_phases() const noexcept { return densities_.size() - 1; }
  [[nodiscard]] const Density& density(std::size_t i) const { return densities_.at(i); }
  [[nodiscard]] const std::vector<Density>& densities() const noexcept { return densities_; }

  /// I_i = KL(f_i || f0), cached at construction.
  [[nodiscard]] double kl(std::size_t i) const {
    check_phase(i);
    return kl_[i - 1];
  }
  [[nodiscard]] const std::vector<double>& kl_all() const noexcept { return kl_; }

  [[nodiscard]] double log_f0(double x) const {
    const double l0 = densities_[0].log_pdf(x);
    if (l0 == -kInf) {
      throw Error(ErrorKind::out_of_support, "observation " + std::to_string(x) + " has zero pre-change density");
    }
    return l0;
  }

  /// Z_i(x) = log f_i(x) - log f0(x), with kLogZero where f_i vanishes.
  [[nodiscard]] double llr(std::size_t i, double x) const {
    return llr_given_f0(i, x, log_f0(x));
  }

  [[nodiscard]] double llr_given_f0(std::size_t i, double x, double log_f0_x) const {
    const double li = densities_[i].log_pdf(x);
    return li == -kInf ? kLogZero : li - log_f0_x;
  }

  void check_phase(std::size_t i) const {
    require(i >= 1 && i <= num_phases(), ErrorKind::invalid_argument,
            "phase index " + std::to_string(i) + " outside 1.." + std::to_string(num_phases()));
  }

 private:
  std::vector<Density> densities_;
  std::vector<double> kl_;
};

inline double log_likelihood_ratio(const PhaseModel& model, std::size_t phase, double x) {
  model.check_phase(phase);
  return model.llr(phase, x);
}

inline double kl_divergence(const PhaseModel& model, std::size_t phase) {
  model.check_phase(phase);
  return kl_divergence(model.density(phase), model.density(0));
}

/// Phi(x) = log(max_i f_i(x) / f0(x)).
inline double phi(const PhaseModel& model, double x) {
  const double l0 = model.log_f0(x);
  double best = kLogZero;
  for (std::size_t i = 1; i <= model.num_phases(); ++i) best = std::max(best, model.llr_given_f0(i, x, l0));
  return best;
}

/// Second moment of the likelihood ratio f_i/f0 under f0, i.e. the integral
/// of f_i^2/f0. Infinite when the ratio is not square-integrable.
inline double likelihood_ratio_second_moment(const PhaseModel& model, std::size_t phase) {
  model.check_phase(phase);
  const Density& p = model.density(phase);
  const Density& q = model.density(0);
  if (p.is_gaussian() && q.is_gaussian()) {
    const auto& a = p.gaussian();
    const auto& b = q.gaussian();
    const double va = a.stdev * a.stdev;
    const double vb = b.stdev * b.stdev;
    if (2.0 * vb <= va) return kInf;
    const double dm = a.mean - b.mean;
    return vb / (a.stdev * std::sqrt(2.0 * vb - va)) * std::exp(dm * dm / (2.0 * vb - va));
  }
  using boost::math::quadrature::gauss_kronrod;
  auto integrand = [&](double x) {
    const double lp = p.log_pdf(x);
    if (lp == -kInf) return 0.0;
    return std::exp(2.0 * lp - q.log_pdf(x));
  };
  if (p.is_gaussian()) return kInf;  // q bounded: ratio unbounded on a set of positive f0 mass or undefined
  std::vector<double> cuts = p.step().breakpoints;
  if (!q.is_gaussian()) cuts = detail::merged_breakpoints(cuts, q.step().breakpoints);
  double total = 0.0;
  for (std::size_t j = 0; j + 1 < cuts.size(); ++j) {
    const double mid = 0.5 * (cuts[j] + cuts[j + 1]);
    if (p.log_pdf(mid) == -kInf) continue;
    if (q.log_pdf(mid) == -kInf) return kInf;
    total += gauss_kronrod<double, 31>::integrate(integrand, cuts[j], cuts[j + 1], 15, 1e-12);
  }
  return total;
}

struct AlphaEstimate {
  double mean_phi = 0.0;     // Monte Carlo estimate of E_{f0}[Phi]
  double mean_phi_se = 0.0;  // its standard error
  std::optional<double> alpha;  // set only when E_{f0}[Phi] + 3 se < 0
  double t_star = 0.0;          // minimizer of theta(t) + t E[Phi]

  [[nodiscard]] bool certified() const noexcept { return alpha.has_value(); }
};

/// Chernoff exponent alpha for the regeneration tail P(Y > m) <= exp(-alpha m).
/// Uses one f0 sample for E[Phi] and every theta(t) evaluation.
inline AlphaEstimate estimate_alpha(const PhaseModel& model, std::size_t n_samples, std::uint64_t seed) {
  require(n_samples >= 10000, ErrorKind::invalid_argument, "estimate_alpha needs at least 1e4 samples");
  auto rng = stream_rng(derive_seed(seed, 0xa1fa), 0);
  std::vector<double> values(n_samples);
  double sum = 0.0;
  for (auto& v : values) {
    v = phi(model, model.density(0).sample(rng));
    sum += v;
  }
  const auto n = static_cast<double>(n_samples);
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  AlphaEstimate out;
  out.mean_phi = mean;
  out.mean_phi_se = std::sqrt(ss / (n - 1.0) / n);
  if (mean + 3.0 * out.mean_phi_se >= 0.0) return out;

  std::vector<double> scratch(n_samples);
  const double log_n = std::log(n);
  auto objective = [&](double t) {
    for (std::size_t j = 0; j < n_samples; ++j) scratch[j] = t * (values[j] - mean);
    const double theta = log_sum_exp(scratch) - log_n;
    return theta + t * mean;
  };
  const auto best = golden_section_minimize(objective, 0.0, 50.0, 1e-6);
  out.t_star = best.x;
  if (best.value < 0.0) out.alpha = -best.value;
  return out;
}

}  // namespace qcd
