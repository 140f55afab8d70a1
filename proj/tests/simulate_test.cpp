#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "qcd/simulate.hpp"
#include "test_support.hpp"

namespace qcd::sim {
namespace {

using qcd::testing::example2_model;
using qcd::testing::gaussian_model;

TEST(ScenarioSpec, PhaseBoundaries) {
  const auto s = parse_scenario("v1=20;d=20");
  EXPECT_EQ(s.phase_at(1), 0u);
  EXPECT_EQ(s.phase_at(19), 0u);
  EXPECT_EQ(s.phase_at(20), 1u);
  EXPECT_EQ(s.phase_at(39), 1u);
  EXPECT_EQ(s.phase_at(40), 2u);
  EXPECT_EQ(s.phase_at(100000), 2u);

  const auto zero = parse_scenario("v1=1;d=0");
  EXPECT_EQ(zero.phase_at(1), 2u);
  const auto forever = parse_scenario("v1=1;d=inf");
  EXPECT_EQ(forever.phase_at(1000000), 1u);
  const auto none = parse_scenario("v1=inf");
  EXPECT_EQ(none.phase_at(1000000), 0u);
  const auto three = parse_scenario("v1=5;d=2,0");
  EXPECT_EQ(three.phase_at(6), 1u);
  EXPECT_EQ(three.phase_at(7), 3u);
}

TEST(ScenarioSpec, ParseAndFormatRoundTrip) {
  for (const char* text : {"v1=1;d=40", "v1=inf", "v1=3;d=inf,7", "v1=1"}) {
    EXPECT_EQ(format_scenario(parse_scenario(text)), text);
  }
  EXPECT_THROW((void)parse_scenario("d=4"), Error);
  EXPECT_THROW((void)parse_scenario("v1=x;d=4"), Error);
  EXPECT_THROW((void)parse_scenario("v1=1;e=4"), Error);
  EXPECT_THROW((void)parse_scenario("v1=0;d=4").validate(2), Error);
  EXPECT_THROW((void)parse_scenario("v1=1;d=4,5").validate(2), Error);
}

TEST(ObservationStream, ZeroTransientDrawsFromLastPhase) {
  // f0 and f1 on [0,1], f2 on (1,2]: the support identifies the phase
  const PhaseModel model({PiecewiseConstant{{0.0, 2.0}, {0.5}}, PiecewiseConstant{{0.0, 1.0, 2.0}, {1.0, 0.0}},
                          PiecewiseConstant{{0.0, 1.0, 2.0}, {0.0, 1.0}}});
  auto stream = sample_stream(model, parse_scenario("v1=3;d=2"), Xoshiro256(1));
  for (int k = 1; k <= 2; ++k) (void)stream.next();
  for (int k = 3; k <= 4; ++k) EXPECT_LE(stream.next(), 1.0);
  for (int k = 5; k <= 50; ++k) {
    EXPECT_GE(stream.next(), 1.0);
    EXPECT_EQ(stream.phase(), 2u);
  }
  auto direct = sample_stream(model, parse_scenario("v1=1;d=0"), Xoshiro256(2));
  for (int k = 0; k < 50; ++k) EXPECT_GE(direct.next(), 1.0);
}

TEST(ObservationStream, DeterministicGivenSeed) {
  const auto model = gaussian_model({0.3, -0.3});
  auto a = sample_stream(model, parse_scenario("v1=20;d=20"), stream_rng(9, 3));
  auto b = sample_stream(model, parse_scenario("v1=20;d=20"), stream_rng(9, 3));
  auto c = sample_stream(model, parse_scenario("v1=20;d=20"), stream_rng(9, 4));
  bool differs = false;
  for (int k = 0; k < 100; ++k) {
    const double x = a.next();
    EXPECT_EQ(x, b.next());
    differs = differs || x != c.next();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, StreamKeysDoNotCollide) {
  std::vector<std::uint64_t> firsts;
  for (std::uint64_t m = 0; m < 20; ++m) {
    for (std::uint64_t i = 0; i < 50; ++i) firsts.push_back(stream_rng(m, i)());
  }
  std::sort(firsts.begin(), firsts.end());
  EXPECT_EQ(std::adjacent_find(firsts.begin(), firsts.end()), firsts.end());
  EXPECT_NE(arl_stream_seed(1), wadd_stream_seed(1, 0));
}

TEST(FirstPassages, MatchSeparateRuns) {
  const auto model = gaussian_model({0.5, -0.5});
  const std::vector<double> bs{1.0, 2.0, 3.5, 5.0};
  const DetectorConfig base{DetectorKind::wdcusum, 1.0, {0.05}};
  const WeightTable weights(base.rho);
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    ObservationStream joint(model, parse_scenario("v1=1;d=10"), stream_rng(5, trial));
    const auto all = first_passages(model, base.kind, weights, bs, joint, 10000);
    for (std::size_t t = 0; t < bs.size(); ++t) {
      DetectorConfig cfg = base;
      cfg.threshold = bs[t];
      ObservationStream single(model, parse_scenario("v1=1;d=10"), stream_rng(5, trial));
      const auto run = run_until_stop(model, cfg, single, 10000);
      EXPECT_EQ(all[t].stop_time, run.stop_time);
    }
  }
}

TEST(EstimateArl, TinyThresholdStopsAlmostImmediately) {
  const auto model = gaussian_model({1.0});
  const auto e = estimate_arl(model, {DetectorKind::cusum, 1e-9, {}}, 500, 1000, 3, 1);
  EXPECT_GE(e.mean, 1.0);
  // first crossing is the first sample above 0.5, geometric with mean 1/0.3085
  EXPECT_NEAR(e.mean, 1.0 / 0.3085375387259869, 4.0 * e.std_error);
  EXPECT_EQ(e.n_censored, 0u);
}

TEST(EstimateArl, WdcusumBoundAtSmallThreshold) {
  const auto model = gaussian_model({0.3, -0.3});
  const auto e = estimate_arl(model, {DetectorKind::wdcusum, 5.0, {0.02}}, 2000, 1000000, 11);
  EXPECT_GE(e.mean, std::exp(5.0) / 2.0 - 3.0 * e.std_error);
  EXPECT_EQ(e.n_censored, 0u);
}

TEST(EstimateArl, CensoredTrialsCountedAtHorizon) {
  const auto model = gaussian_model({0.3});
  const auto e = estimate_arl(model, {DetectorKind::cusum, 30.0, {}}, 100, 50, 1, 1);
  EXPECT_EQ(e.n_censored, 100u);
  EXPECT_EQ(e.mean, 50.0);
  EXPECT_EQ(e.std_error, 0.0);
}

TEST(EstimateArl, RejectsTooFewTrials) {
  EXPECT_THROW((void)estimate_arl(gaussian_model({1.0}), {DetectorKind::cusum, 1.0, {}}, 99, 10, 1), Error);
}

TEST(EstimateWadd, RequiresChangeAtOne) {
  const auto model = gaussian_model({1.0, 0.5});
  try {
    (void)estimate_wadd(model, {DetectorKind::dcusum, 3.0, {}}, parse_scenario("v1=2;d=4"), 10, 100, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_scenario);
  }
}

TEST(EstimateWadd, LongTransientCrossesInPhaseOne) {
  const auto model = gaussian_model({1.0, 0.5});
  const auto e = estimate_wadd(model, {DetectorKind::dcusum, 6.0, {}}, parse_scenario("v1=1;d=1000"), 2000, 100000, 4);
  ASSERT_EQ(e.phase_histogram.size(), 3u);
  EXPECT_GE(e.phase_histogram[1], 0.95 * 2000);
  // b / I_1 plus a bounded overshoot term
  EXPECT_GT(e.mean, 6.0 / 0.5);
  EXPECT_LT(e.mean, 6.0 / 0.5 + 10.0);
}

TEST(EstimateWadd, ZeroTransientIsGovernedBySecondPhase) {
  const auto model = gaussian_model({1.0, 0.5});
  const auto e = estimate_wadd(model, {DetectorKind::dcusum, 6.0, {}}, parse_scenario("v1=1;d=0"), 2000, 100000, 4);
  EXPECT_EQ(e.phase_histogram[1], 0u);
  EXPECT_GT(e.mean, 6.0 / 0.5 + 10.0);
}

TEST(OcSweep, BitIdenticalAcrossThreadCounts) {
  const auto model = gaussian_model({0.3, -0.3});
  SweepOptions opt;
  opt.arl_trials = 200;
  opt.wadd_trials = 300;
  opt.arl_max_steps = 5000;
  const std::vector<ScenarioSpec> sc{parse_scenario("v1=1;d=40"), parse_scenario("v1=1;d=inf")};
  opt.threads = 1;
  const auto a = oc_sweep(model, DetectorKind::wdcusum, {0.02}, {2.0, 3.0, 4.0}, sc, opt, 77);
  opt.threads = 5;
  const auto b = oc_sweep(model, DetectorKind::wdcusum, {0.02}, {2.0, 3.0, 4.0}, sc, opt, 77);
  ASSERT_EQ(a.rows.size(), 3u);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(a.rows[t].arl.mean, b.rows[t].arl.mean);
    EXPECT_EQ(a.rows[t].arl.std_error, b.rows[t].arl.std_error);
    for (std::size_t s = 0; s < sc.size(); ++s) {
      EXPECT_EQ(a.rows[t].wadd[s].mean, b.rows[t].wadd[s].mean);
      EXPECT_EQ(a.rows[t].wadd[s].phase_histogram, b.rows[t].wadd[s].phase_histogram);
    }
  }
  // ARL monotone in b since all thresholds share streams
  EXPECT_LE(a.rows[0].arl.mean, a.rows[1].arl.mean);
  EXPECT_LE(a.rows[1].arl.mean, a.rows[2].arl.mean);
}

TEST(OcSweep, DcusumNeverSlowerThanWdcusumOnCommonStreams) {
  const auto model = gaussian_model({0.3, -0.3});
  SweepOptions opt;
  opt.arl_trials = 0;
  opt.wadd_trials = 500;
  const std::vector<ScenarioSpec> sc{parse_scenario("v1=1;d=40")};
  const std::vector<double> bs{2.0, 4.0, 6.0};
  const auto d = oc_sweep(model, DetectorKind::dcusum, {}, bs, sc, opt, 8);
  const auto w = oc_sweep(model, DetectorKind::wdcusum, {0.01}, bs, sc, opt, 8);
  for (std::size_t t = 0; t < bs.size(); ++t) EXPECT_LE(d.rows[t].wadd[0].mean, w.rows[t].wadd[0].mean);
}

TEST(OcSweep, RejectsDescendingThresholds) {
  const auto model = gaussian_model({1.0});
  SweepOptions opt;
  opt.arl_trials = 100;
  EXPECT_THROW((void)oc_sweep(model, DetectorKind::cusum, {}, {3.0, 2.0}, {}, opt, 1), Error);
}

TEST(RegenerationSurvey, Example2NeverRegenerates) {
  const auto survey = regeneration_survey(example2_model(), 2000, 50, 1);
  EXPECT_EQ(survey.regenerations(), 0u);
  EXPECT_EQ(survey.survival(2000), 1.0);
}

TEST(RegenerationSurvey, ClassicalCusumRegenerates) {
  const auto survey = regeneration_survey(gaussian_model({1.0}), 1000, 200, 1);
  EXPECT_EQ(survey.regenerations(), 200u);
  EXPECT_LT(survey.survival(1), 1.0);
  const auto slope = survey.log_survival_slope();
  ASSERT_TRUE(slope.has_value());
  EXPECT_LT(slope->slope, 0.0);
}

}  // namespace
}  // namespace qcd::sim
