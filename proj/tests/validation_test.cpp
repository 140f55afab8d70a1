#include <gtest/gtest.h>

#include "qcd/validation.hpp"
#include "test_support.hpp"

namespace qcd::validation {
namespace {

using qcd::testing::example2_model;
using qcd::testing::gaussian_model;

Options small_options() {
  Options opt;
  opt.n_streams = 100;
  opt.window = 15;
  opt.martingale_streams = 20000;
  return opt;
}

TEST(Validation, AllPropertiesPassOnTwoPhaseModels) {
  for (const auto& model : {gaussian_model({0.3, -0.3}), example2_model()}) {
    for (const auto& r : run_all(model, small_options())) {
      EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
    }
  }
}

TEST(Validation, SkipsWhatDoesNotApply) {
  const auto results = run_all(gaussian_model({1.0}), small_options());
  int skipped = 0;
  for (const auto& r : results) {
    EXPECT_TRUE(r.passed) << r.name;
    skipped += r.skipped ? 1 : 0;
  }
  EXPECT_EQ(skipped, 3);  // two-channel form, sandwich, martingale
}

TEST(Validation, MartingaleSkippedForHeavyLikelihoodRatios) {
  // E[(f1/f0)^2] = e^9 for N(3,1) against N(0,1)
  EXPECT_EQ(martingale_window(gaussian_model({3.0, 1.0})), 0u);
  EXPECT_EQ(martingale_window(gaussian_model({0.3, -0.3})), 20u);
  const auto r = martingale(gaussian_model({3.0, 1.0}), small_options());
  EXPECT_TRUE(r.skipped);
}

TEST(Validation, StreamsAreReproducible) {
  const auto model = gaussian_model({0.3, -0.3});
  EXPECT_EQ(validation_stream(model, 20, 5, 3), validation_stream(model, 20, 5, 3));
  EXPECT_NE(validation_stream(model, 20, 5, 3), validation_stream(model, 20, 5, 4));
}

TEST(Validation, DetectsWrongBound) {
  // a negative tolerance makes the equality check impossible to satisfy
  Options opt = small_options();
  opt.tolerance = -1.0;
  const auto r = oracle_equivalence(gaussian_model({0.3, -0.3}), opt);
  EXPECT_FALSE(r.passed);
  ASSERT_TRUE(r.failing_stream.has_value());
  EXPECT_EQ(*r.failing_stream, 0u);
}

}  // namespace
}  // namespace qcd::validation
