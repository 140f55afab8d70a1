#include <cmath>
#include <cstring>
#include <optional>
#include <vector>

#include <gtest/gtest.h>

#include "qcd/detectors.hpp"
#include "qcd/oracle.hpp"
#include "test_support.hpp"

namespace qcd {
namespace {

using testing::example2_model;
using testing::gaussian_model;

constexpr double kZ1 = 0.47000362924573563;  // Example 2, x = 0.5
constexpr double kZ2 = -0.916290731874155;

TEST(DetectorConfig, Validation) {
  EXPECT_THROW((DetectorConfig{DetectorKind::dcusum, 0.0, {}}.validate(2)), Error);
  EXPECT_THROW((DetectorConfig{DetectorKind::wdcusum, 1.0, {}}.validate(2)), Error);
  EXPECT_THROW((DetectorConfig{DetectorKind::wdcusum, 1.0, {1.0}}.validate(2)), Error);
  EXPECT_THROW((DetectorConfig{DetectorKind::wdcusum, 1.0, {0.0}}.validate(2)), Error);
  EXPECT_THROW((DetectorConfig{DetectorKind::cusum, 1.0, {}}.validate(2)), Error);
  EXPECT_NO_THROW((DetectorConfig{DetectorKind::wdcusum, 1.0, {0.5}}.validate(2)));
  EXPECT_NO_THROW((DetectorConfig{DetectorKind::cusum, 1.0, {}}.validate(1)));
}

TEST(DetectorState, InitialValues) {
  const auto d = DetectorState::initial(DetectorKind::dcusum, 3);
  EXPECT_EQ(d.omega, std::vector<double>(3, 0.0));
  const auto w = DetectorState::initial(DetectorKind::wdcusum, 3);
  EXPECT_EQ(w.omega, std::vector<double>(3, kLogZero));
  EXPECT_EQ(w.statistic(), 0.0);
  EXPECT_FALSE(w.stopped_at);
}

TEST(DcusumStep, Example2FirstSample) {
  const auto model = example2_model();
  auto state = DetectorState::initial(DetectorKind::dcusum, 2);
  const auto out = dcusum_step(model, state, 0.5, 100.0);
  EXPECT_NEAR(state.omega[0], kZ1, 1e-15);
  EXPECT_NEAR(state.omega[1], kZ2, 1e-15);
  EXPECT_NEAR(out.statistic, kZ1, 1e-15);
  EXPECT_FALSE(out.regenerated);
  EXPECT_EQ(state.k, 1u);
  EXPECT_NEAR(oracle::glr_bruteforce(model, std::vector<double>{0.5}).value, out.statistic, 1e-15);
}

TEST(DcusumStep, NegativeStateRegenerates) {
  const auto model = gaussian_model({1.0, 2.0});
  DetectorState state{{-5.0, -7.0}, 3, std::nullopt};
  // x = -2: Z_1 = -2.5, Z_2 = -6
  const auto out = dcusum_step(model, state, -2.0, 1.0);
  EXPECT_EQ(out.statistic, 0.0);
  EXPECT_TRUE(out.regenerated);
  EXPECT_NEAR(state.omega[0], -2.5, 1e-14);
  EXPECT_NEAR(state.omega[1], -6.0, 1e-14);
}

TEST(DcusumStep, UpdateIsSimultaneous) {
  // channel 2 must see channel 1's previous value, not the freshly written one
  const auto model = gaussian_model({1.0, -1.0});
  DetectorState state{{3.0, -10.0}, 1, std::nullopt};
  const double x = 0.25;
  (void)dcusum_step(model, state, x, 100.0);
  EXPECT_NEAR(state.omega[0], 3.0 + model.llr(1, x), 1e-14);
  EXPECT_NEAR(state.omega[1], 3.0 + model.llr(2, x), 1e-14);
}

TEST(CusumStep, SingleChannelMatchesDcusumBitForBit) {
  const auto model = gaussian_model({1.0});
  Xoshiro256 rng(5);
  auto d = DetectorState::initial(DetectorKind::dcusum, 1);
  auto c = DetectorState::initial(DetectorKind::cusum, 1);
  for (int k = 0; k < 10000; ++k) {
    const double x = model.density(k % 2).sample(rng);
    const double a = dcusum_step(model, d, x, 1e300).statistic;
    const double b = cusum_step(model, c, x, 1e300).statistic;
    ASSERT_EQ(std::memcmp(&a, &b, sizeof a), 0) << k;
  }
}

TEST(WdcusumStep, Example2FirstSampleWithSentinelInit) {
  const auto model = example2_model();
  const WeightTable weights({0.001});
  auto state = DetectorState::initial(DetectorKind::wdcusum, 2);
  const auto out = wdcusum_step(model, weights, state, 0.5, 100.0);
  EXPECT_NEAR(state.omega[0], kZ1 + std::log(0.999), 1e-15);
  EXPECT_NEAR(state.omega[1], std::log(0.001) + kZ2, 1e-14);
  EXPECT_NEAR(out.statistic, 0.46900312891215207, 1e-15);
  const auto brute = oracle::weighted_glr_bruteforce(model, std::vector<double>{0.001}, std::vector<double>{0.5});
  EXPECT_NEAR(brute.value, out.statistic, 1e-15);
}

TEST(WdcusumStep, ZeroInitWouldMissTheRhoPenalty) {
  // Starting channel 2 at 0 instead of the sentinel overstates Omega_2 at k = 1.
  const auto model = example2_model();
  const WeightTable weights({0.001});
  DetectorState zero{{0.0, 0.0}, 0, std::nullopt};
  (void)wdcusum_step(model, weights, zero, 0.5, 100.0);
  const auto brute = oracle::weighted_glr_bruteforce(model, std::vector<double>{0.001}, std::vector<double>{0.5});
  EXPECT_GT(zero.omega[1], std::log(0.001) + kZ2 + 1.0);
  EXPECT_NEAR(brute.raw, kZ1 + std::log(0.999), 1e-15);
}

TEST(WdcusumStep, GeneralAndTwoChannelFormsAgreeBitForBit) {
  Xoshiro256 rng(21);
  for (double rho : {0.001, 0.02, 0.3, 0.9}) {
    const auto model = gaussian_model({3.0, 1.0});
    const WeightTable weights({rho});
    auto general = DetectorState::initial(DetectorKind::wdcusum, 2);
    auto special = DetectorState::initial(DetectorKind::wdcusum, 2);
    for (int k = 0; k < 5000; ++k) {
      const double x = model.density(static_cast<std::size_t>(k / 50) % 3).sample(rng);
      (void)wdcusum_step(model, weights, general, x, 1e300);
      (void)wdcusum_step_l2(model, rho, special, x, 1e300);
      ASSERT_EQ(std::memcmp(general.omega.data(), special.omega.data(), 2 * sizeof(double)), 0)
          << "rho=" << rho << " k=" << k;
    }
  }
}

TEST(WdcusumStep, ZeroPenaltyFormEqualsDcusum) {
  // The WD-CuSum max-over-j update with every log rho and log(1 - rho) term
  // removed, started from zero, is the D-CuSum update.
  const auto model = gaussian_model({1.0, -0.5, 2.0});
  Xoshiro256 rng(8);
  DetectorState d = DetectorState::initial(DetectorKind::dcusum, 3);
  DetectorState w = d;
  for (int k = 0; k < 200; ++k) {
    const double x = model.density(static_cast<std::size_t>(k) % 4).sample(rng);
    (void)dcusum_step(model, d, x, 1e300);
    // D-CuSum written in the WD-CuSum max-over-j form with zero penalties
    const double l0 = model.log_f0(x);
    for (std::size_t i = 3; i >= 1; --i) {
      double best = 0.0;
      for (std::size_t j = 1; j <= i; ++j) best = std::max(best, w.omega[j - 1]);
      w.omega[i - 1] = best + model.llr_given_f0(i, x, l0);
    }
    ASSERT_EQ(d.omega, w.omega);
  }
}

TEST(Detector, StatisticOrderingAndBound) {
  Xoshiro256 rng(13);
  const std::vector<double> rho{0.05, 0.2};
  const auto model = gaussian_model({0.8, -0.6, 1.5});
  Detector d(model, {DetectorKind::dcusum, 1e300, {}});
  Detector w(model, {DetectorKind::wdcusum, 1e300, rho});
  double max_stay = 0.0;
  double sum_log_rho = 0.0;
  for (double r : rho) {
    max_stay = std::max(max_stay, std::abs(std::log1p(-r)));
    sum_log_rho += std::abs(std::log(r));
  }
  for (int k = 1; k <= 3000; ++k) {
    const double x = model.density(static_cast<std::size_t>(k / 40) % 4).sample(rng);
    const double a = d.step(x).statistic;
    const double b = w.step(x).statistic;
    ASSERT_LE(b, a);
    ASSERT_LE(a - b, k * max_stay + sum_log_rho + 1e-9);
  }
}

TEST(Detector, RegenerationRestartIsExact) {
  const auto model = gaussian_model({1.0, 0.5});
  Xoshiro256 rng(99);
  std::vector<double> xs(4000);
  for (auto& x : xs) x = model.density(0).sample(rng);
  Detector full(model, {DetectorKind::dcusum, 1e300, {}});
  std::vector<double> stats;
  for (double x : xs) stats.push_back(full.step(x).statistic);
  int restarts = 0;
  for (std::size_t t = 0; t < xs.size() && restarts < 20; ++t) {
    if (stats[t] != 0.0) continue;
    ++restarts;
    Detector fresh(model, {DetectorKind::dcusum, 1e300, {}});
    for (std::size_t s = t + 1; s < std::min(xs.size(), t + 300); ++s) {
      const double v = fresh.step(xs[s]).statistic;
      ASSERT_EQ(std::memcmp(&v, &stats[s], sizeof v), 0);
    }
  }
  EXPECT_GT(restarts, 5);
}

TEST(Detector, CrossingRulesAndLatch) {
  const auto model = example2_model();
  // statistic after x = 0.5 is exactly log 1.6
  const double z = std::log(0.8) - std::log(0.5);
  Detector strict(model, {DetectorKind::dcusum, z, {}});
  EXPECT_FALSE(strict.step(0.5).crossed);
  Detector lower(model, {DetectorKind::dcusum, 0.4, {}});
  EXPECT_TRUE(lower.step(0.5).crossed);
  EXPECT_EQ(lower.state().stopped_at, 1u);
  (void)lower.step(1.5);
  (void)lower.step(0.5);
  EXPECT_EQ(lower.state().stopped_at, 1u);
  EXPECT_EQ(lower.state().k, 3u);

  EXPECT_TRUE(DetectorConfig::crosses(DetectorKind::wdcusum, 2.0, 2.0));
  EXPECT_FALSE(DetectorConfig::crosses(DetectorKind::dcusum, 2.0, 2.0));
  EXPECT_FALSE(DetectorConfig::crosses(DetectorKind::cusum, 2.0, 2.0));
}

TEST(RunUntilStop, ImmediateCrossing) {
  const auto model = example2_model();
  auto source = [] { return std::optional<double>(0.5); };
  const auto out = run_until_stop(model, {DetectorKind::dcusum, 0.4, {}}, source, 10);
  EXPECT_EQ(out.stop_time, 1u);
  EXPECT_FALSE(out.censored());
}

TEST(RunUntilStop, UnreachableThresholdIsCensored) {
  const auto model = example2_model();
  auto source = [] { return std::optional<double>(0.5); };
  const auto out = run_until_stop(model, {DetectorKind::wdcusum, 1e15, {0.01}}, source, 100);
  EXPECT_TRUE(out.censored());
  EXPECT_EQ(out.steps, 100u);
}

TEST(RunUntilStop, ExhaustedSourceThrows) {
  const auto model = example2_model();
  int left = 3;
  auto source = [&]() -> std::optional<double> {
    if (left-- == 0) return std::nullopt;
    return 1.5;
  };
  try {
    (void)run_until_stop(model, {DetectorKind::dcusum, 1e6, {}}, source, 100);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::stream_ended);
  }
}

TEST(WdcusumDrift, TransientDriftReducedByLogOneMinusRho) {
  // Conditioned on Omega_1 > 0 the increment of Omega_1 is Z_1 + log(1 - rho).
  const auto model = gaussian_model({1.0, 0.5});
  const double rho = 0.2;
  const WeightTable weights({rho});
  auto state = DetectorState::initial(DetectorKind::wdcusum, 2);
  Xoshiro256 rng(31);
  double sum = 0.0;
  double sq = 0.0;
  std::size_t n = 0;
  for (int k = 0; k < 100000; ++k) {
    const double before = state.omega[0];
    (void)wdcusum_step(model, weights, state, model.density(1).sample(rng), 1e300);
    if (before > 0.0) {
      const double inc = state.omega[0] - before;
      sum += inc;
      sq += inc * inc;
      ++n;
    }
  }
  ASSERT_GT(n, 50000u);
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  EXPECT_NEAR(mean, 0.5 + std::log1p(-rho), 3.0 * se);
}

}  // namespace
}  // namespace qcd
