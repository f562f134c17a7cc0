#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "patchot/exact_ot.hpp"
#include "patchot/semidual.hpp"
#include "test_util.hpp"

namespace patchot {
namespace {

using testing::point_set;
using testing::random_points;

// Direct evaluation of min_j 1/2|x - y_j|^2 - phi_j, smallest index on ties.
Assignment brute_force_c_transform(const PatchMatrix<double>& x, const PatchMatrix<double>& y,
                                   const std::vector<double>& phi) {
  const auto cost = quadratic_cost_matrix(x, y);
  Assignment a;
  for (std::size_t i = 0; i < x.count(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < y.count(); ++j) {
      if (cost[i * y.count() + j] - phi[j] < cost[i * y.count() + best] - phi[best]) best = j;
    }
    a.indices.push_back(best);
    a.costs.push_back(cost[i * y.count() + best] - phi[best]);
  }
  return a;
}

std::vector<double> random_phi(std::size_t m, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> N(0.0, scale);
  std::vector<double> phi(m);
  for (auto& v : phi) v = N(rng);
  return phi;
}

TEST(CTransform, ZeroPotentialIsNearestNeighbour) {
  std::mt19937_64 rng(1);
  const auto x = random_points(40, 6, rng);
  const auto y = random_points(33, 6, rng);
  DualPotential<double> pot(y);
  const auto a = c_transform(x, pot);
  const auto b = brute_force_c_transform(x, y, std::vector<double>(33, 0.0));
  EXPECT_EQ(a.indices, b.indices);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.costs[i], b.costs[i], 1e-14);
}

TEST(CTransform, MatchesBruteForceWithRandomPotential) {
  std::mt19937_64 rng(2);
  for (std::size_t m : {1u, 7u, 16u, 17u, 50u}) {
    const auto x = random_points(70, 5, rng);
    const auto y = random_points(m, 5, rng);
    const auto phi = random_phi(m, 0.2, rng);
    const auto a = c_transform(x, DualPotential<double>(y, phi));
    const auto b = brute_force_c_transform(x, y, phi);
    EXPECT_EQ(a.indices, b.indices) << "m=" << m;
  }
}

TEST(CTransform, SingleTarget) {
  const auto x = point_set({{0.0, 1.0}, {2.0, -1.0}, {0.5, 0.5}});
  const auto y = point_set({{1.0, 0.0}});
  const auto a = c_transform(x, DualPotential<double>(y, {0.3}));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.indices[i], 0u);
    double d2 = 0;
    for (std::size_t k = 0; k < 2; ++k) d2 += (x.row(i)[k] - y.row(0)[k]) * (x.row(i)[k] - y.row(0)[k]);
    EXPECT_NEAR(a.costs[i], 0.5 * d2 - 0.3, 1e-15);
  }
}

TEST(CTransform, TieGoesToSmallestIndex) {
  // x = 0 -> target 1 (cost 0.5 vs 4.5); x = 2 ties at 0.5 -> index 0.
  const auto a = c_transform(point_set({{0}, {2}}), DualPotential<double>(point_set({{1}, {3}})));
  EXPECT_EQ(a.indices, (std::vector<std::size_t>{0, 0}));
  EXPECT_EQ(a.costs, (std::vector<double>{0.5, 0.5}));
}

TEST(CTransform, TiesAcrossLanesPickSmallestIndex) {
  // 40 identical targets: every lane holds the same score.
  std::vector<std::vector<double>> ys(40, std::vector<double>{0.25, 0.75});
  const auto a = c_transform(point_set({{0.0, 0.0}, {1.0, 1.0}}), DualPotential<double>(point_set(ys)));
  EXPECT_EQ(a.indices, (std::vector<std::size_t>{0, 0}));
}

TEST(CTransform, DimensionMismatchThrows) {
  const auto x = point_set({{0.0, 1.0}});
  const auto y = point_set({{1.0}});
  EXPECT_THROW(c_transform(x, DualPotential<double>(y)), std::invalid_argument);
}

TEST(CTransform, CachedAndStreamingAgree) {
  std::mt19937_64 rng(3);
  const auto x = random_points<float>(300, 12, rng);
  const auto y = random_points<float>(200, 12, rng);
  std::vector<float> phi(200);
  for (auto& v : phi) v = static_cast<float>(std::normal_distribution<double>(0, 0.1)(rng));
  BiasedNearestSearch<float> cached(x, y);
  BiasedNearestSearch<float> streaming(x, y, 0);
  ASSERT_TRUE(cached.cached());
  ASSERT_FALSE(streaming.cached());
  const auto a = cached(phi), b = streaming(phi);
  EXPECT_EQ(a.indices, b.indices);
  EXPECT_EQ(a.costs, b.costs);
}

TEST(CTransform, CachedSearchMatchesFullScanAlongAscent) {
  // Enough targets for the cached search to answer most rows from a short
  // candidate list; the streaming search always scans every target.
  std::mt19937_64 rng(31);
  const auto x = random_points<float>(700, 12, rng);
  const auto y = random_points<float>(520, 12, rng);
  BiasedNearestSearch<float> streaming(x, y, 0);
  DualAscent<float> ascent(x, y, 0.8);
  ASSERT_TRUE(ascent.search().cached());
  for (int round = 0; round < 6; ++round) {
    const auto a = ascent.search()(ascent.phi());
    const auto b = streaming(ascent.phi());
    EXPECT_EQ(a.indices, b.indices) << "round " << round;
    EXPECT_EQ(a.costs, b.costs);
    ascent.run(25);
  }
  std::vector<float> wild(520);
  for (auto& v : wild) v = static_cast<float>(std::normal_distribution<double>(0, 0.5)(rng));
  EXPECT_EQ(ascent.search()(wild).indices, streaming(wild).indices);
}

TEST(CTransform, PermutingTargetsPermutesIndices) {
  std::mt19937_64 rng(4);
  const auto x = random_points(50, 4, rng);
  const auto y = random_points(30, 4, rng);
  const auto phi = random_phi(30, 0.1, rng);
  std::vector<std::size_t> perm(30);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto yp = select_rows(y, std::span<const std::size_t>(perm));
  std::vector<double> phip(30);
  for (std::size_t k = 0; k < 30; ++k) phip[k] = phi[perm[k]];
  const auto a = c_transform(x, DualPotential<double>(y, phi));
  const auto b = c_transform(x, DualPotential<double>(yp, phip));
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(perm[b.indices[i]], a.indices[i]);
    EXPECT_EQ(a.costs[i], b.costs[i]);
  }
}

TEST(DualSupergradient, BijectionGivesZero) {
  Assignment a{{2, 0, 1}, {0, 0, 0}};
  for (double g : dual_supergradient(a, 3)) EXPECT_EQ(g, 0.0);
}

TEST(DualSupergradient, AllToFirst) {
  Assignment a{{0, 0}, {0, 0}};
  const auto g = dual_supergradient(a, 2);
  EXPECT_DOUBLE_EQ(g[0], -0.5);
  EXPECT_DOUBLE_EQ(g[1], 0.5);
}

TEST(DualSupergradient, SumsToZero) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + rng() % 40, m = 1 + rng() % 40;
    Assignment a;
    for (std::size_t i = 0; i < n; ++i) a.indices.push_back(rng() % m);
    a.costs.assign(n, 0.0);
    const auto g = dual_supergradient(a, m);
    EXPECT_NEAR(std::accumulate(g.begin(), g.end(), 0.0), 0.0, 1e-12);
  }
}

TEST(DualSupergradient, OutOfRangeThrows) {
  Assignment a{{3}, {0}};
  EXPECT_THROW(dual_supergradient(a, 3), std::invalid_argument);
}

TEST(SemidualValue, IdenticalSetsAtZeroPotential) {
  std::mt19937_64 rng(6);
  const auto x = random_points(12, 3, rng);
  EXPECT_NEAR(semidual_value(x, DualPotential<double>(x)), 0.0, 1e-15);
}

TEST(SemidualValue, ConstantShiftOfPotentialIsInvisible) {
  std::mt19937_64 rng(7);
  const auto x = random_points(20, 3, rng);
  const auto y = random_points(15, 3, rng);
  auto phi = random_phi(15, 0.2, rng);
  const auto a = c_transform(x, DualPotential<double>(y, phi));
  const double f = semidual_value(x, DualPotential<double>(y, phi));
  for (auto& v : phi) v += 1.75;
  const auto b = c_transform(x, DualPotential<double>(y, phi));
  EXPECT_EQ(a.indices, b.indices);
  EXPECT_NEAR(semidual_value(x, DualPotential<double>(y, phi)), f, 1e-12);
}

TEST(SemidualValue, WeakDuality) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 2 + rng() % 31, m = 2 + rng() % 31;
    const auto x = random_points(n, 3, rng);
    const auto y = random_points(m, 3, rng);
    const double ot = exact_ot_small(x, y);
    for (int k = 0; k < 5; ++k) {
      const auto phi = random_phi(m, 0.3, rng);
      EXPECT_LE(semidual_value(x, DualPotential<double>(y, phi)), ot + 1e-9);
    }
  }
}

TEST(SemidualValue, SupergradientInequality) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 3 + rng() % 14, m = 3 + rng() % 14;
    const auto x = random_points(n, 4, rng);
    const auto y = random_points(m, 4, rng);
    const auto phi = random_phi(m, 0.2, rng);
    const DualPotential<double> pot(y, phi);
    const auto a = c_transform(x, pot);
    const double f = semidual_value<double>(a, pot.values());
    const auto g = dual_supergradient(a, m);
    for (int k = 0; k < 20; ++k) {
      const auto delta = random_phi(m, 0.05, rng);
      std::vector<double> moved(m);
      double lin = 0;
      for (std::size_t j = 0; j < m; ++j) {
        moved[j] = phi[j] + delta[j];
        lin += g[j] * delta[j];
      }
      EXPECT_LE(semidual_value(x, DualPotential<double>(y, moved)), f + lin + 1e-9);
    }
  }
}

TEST(AscendDual, IdenticalSetsStayAtZero) {
  std::mt19937_64 rng(10);
  const auto x = random_points(16, 4, rng);
  const auto phi = ascend_dual(x, x, 100, 0.8);
  const double f = semidual_value(x, phi);
  EXPECT_LE(f, 0.0);
  EXPECT_GE(f, -1e-6);
}

TEST(AscendDual, TwoPointInstanceReachesOtCost) {
  const auto x = point_set({{0}, {2}});
  const auto y = point_set({{1}, {3}});
  const auto phi = ascend_dual(x, y, 200, 0.8);
  EXPECT_NEAR(semidual_value(x, phi), 0.5, 0.005);
}

TEST(AscendDual, ReachesExactCostOnPatchSizedPoints) {
  // 4x4x3 patches: 48-dimensional points.
  std::mt19937_64 rng(11);
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = 2 + rng() % 15, m = 2 + rng() % 15;
    const auto x = random_points(n, 48, rng);
    const auto y = random_points(m, 48, rng);
    const double ot = exact_ot_small(x, y);
    const double f = semidual_value(x, ascend_dual(x, y, 500, 0.8));
    EXPECT_LE(f, ot + 1e-9);
    EXPECT_GE(f, ot * 0.99) << "trial " << t << " n=" << n << " m=" << m;
  }
}

TEST(AscendDual, WarmStartAtOptimumStaysNearOptimum) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = 8;
    const auto x = random_points(n, 3, rng);
    const auto y = random_points(n, 3, rng);
    const auto cost = quadratic_cost_matrix(x, y);
    const auto sol = hungarian_assignment(cost, n);
    const double ot = sol.total_cost / n;
    const DualPotential<double> opt(y, sol.col_potential);
    EXPECT_NEAR(semidual_value(x, opt), ot, 1e-12);
    const std::size_t iters = 100;
    const double f = semidual_value(x, ascend_dual(x, y, iters, 0.8, std::optional(opt)));
    // f is 2-Lipschitz in sup norm; the last steps move phi by at most
    // step0 / sqrt(k) each.
    EXPECT_LE(f, ot + 1e-9);
    EXPECT_GE(f, ot - 2 * 0.8 / std::sqrt(static_cast<double>(iters)));
  }
}

TEST(AscendDual, RejectsBadArguments) {
  const auto x = point_set({{0}});
  EXPECT_THROW(ascend_dual(x, x, 0, 0.8), std::invalid_argument);
  EXPECT_THROW(ascend_dual(x, x, 10, 0.0), std::invalid_argument);
}

TEST(DualPotential, RejectsNonFiniteAndWrongLength) {
  const auto y = point_set({{0}, {1}});
  EXPECT_THROW(DualPotential<double>(y, {0.0}), std::invalid_argument);
  EXPECT_THROW(DualPotential<double>(y, {0.0, std::nan("")}), std::invalid_argument);
}

}  // namespace
}  // namespace patchot
