#include <gtest/gtest.h>

#include <random>

#include "patchot/exact_ot.hpp"
#include "patchot/metric.hpp"
#include "test_util.hpp"

namespace patchot {
namespace {

using testing::random_image;
using testing::structured_texture;

Image<double> add_noise(const Image<double>& img, double amplitude, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, amplitude);
  Image<double> out = img;
  for (auto& v : out.values()) v += N(rng);
  return out;
}

TEST(OtMetric, SelfDistanceVanishes) {
  const auto v = structured_texture<double>(32, 32, 1);
  const auto r = ot_metric(v, v, 4, 3);
  ASSERT_EQ(r.per_scale.size(), 3u);
  for (double f : r.per_scale) {
    EXPECT_LE(f, 1e-6);
    EXPECT_GE(f, -1e-6);
  }
  EXPECT_EQ(r.direction, "candidate\u2192reference");
  EXPECT_EQ(r.dual_iters, kMetricDualIters);
}

TEST(OtMetric, CircularShiftOfEitherArgument) {
  const auto a = structured_texture<double>(32, 32, 2);
  const auto b = add_noise(structured_texture<double>(32, 32, 3), 0.05, 4);
  const auto base = ot_metric(a, b, 4, 3);
  // Shifts by multiples of 4 = 2^(L-1) commute with the pyramid.
  const auto cand = ot_metric(circular_shift(a, 8, -4), b, 4, 3);
  const auto ref = ot_metric(a, circular_shift(b, -12, 20), 4, 3);
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_NEAR(cand.per_scale[l], base.per_scale[l], 1e-6);
    EXPECT_NEAR(ref.per_scale[l], base.per_scale[l], 1e-6);
  }
}

TEST(OtMetric, AnyCircularShiftAtSingleScale) {
  const auto a = structured_texture<double>(24, 20, 6);
  const auto b = add_noise(structured_texture<double>(24, 20, 7), 0.05, 8);
  const double base = ot_metric(a, b, 4, 1).total;
  EXPECT_NEAR(ot_metric(circular_shift(a, 5, -3), b, 4, 1).total, base, 1e-6);
  EXPECT_NEAR(ot_metric(a, circular_shift(b, -7, 11), 4, 1).total, base, 1e-6);
}

TEST(OtMetric, GrowsWithNoiseAmplitude) {
  const auto v = structured_texture<double>(32, 32, 5);
  double previous = ot_metric(v, v, 4, 2).total;
  for (double amp : {0.05, 0.1, 0.2}) {
    const double d = ot_metric(add_noise(v, amp, 6), v, 4, 2).total;
    EXPECT_GT(d, previous) << "amplitude " << amp;
    previous = d;
  }
}

TEST(OtMetric, TinyInstanceMatchesExactCost) {
  for (std::uint64_t seed : {7u, 8u, 9u}) {
    const auto a = random_image(6, 6, 3, seed);
    const auto b = random_image(6, 6, 3, seed + 100);
    const double exact = exact_ot_small(extract_patches(a, 2, BoundaryMode::periodic),
                                        extract_patches(b, 2, BoundaryMode::periodic));
    const double approx = ot_metric(a, b, 2, 1).total;
    EXPECT_LE(approx, exact + 1e-9);
    EXPECT_NEAR(approx, exact, 0.02 * exact);
  }
}

TEST(OtMetric, DifferentSizesAreAllowed) {
  const auto a = structured_texture<double>(24, 32, 10);
  const auto b = structured_texture<double>(32, 32, 11);
  const auto r = ot_metric(a, b, 4, 2);
  EXPECT_EQ(r.per_scale.size(), 2u);
  EXPECT_GE(r.total, 0.0);
}

TEST(OtMetric, RejectsMismatchedChannelsAndTinyImages) {
  EXPECT_THROW(ot_metric(random_image(8, 8, 3, 1), random_image(8, 8, 1, 2), 2, 1), std::invalid_argument);
  EXPECT_THROW(ot_metric(random_image(8, 8, 3, 1), random_image(8, 8, 3, 2), 4, 3), std::invalid_argument);
}

}  // namespace
}  // namespace patchot
