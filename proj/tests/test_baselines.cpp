#include <gtest/gtest.h>

#include <cmath>

#include "mosaic/baselines.hpp"
#include "mosaic/errors.hpp"
#include "support.hpp"

using namespace mosaic;
using mosaic::testing::gaussian;

namespace {

Statistic mean_statistic() {
  return {"mean", [](const ResidualPanel& r) { return r.values.mean(); }, true};
}

}  // namespace

TEST(NaiveBootstrap, ConstantStatisticIsDegenerate) {
  const Statistic constant{"constant", [](const ResidualPanel&) { return 1.0; }, true};
  EXPECT_THROW((void)naive_bootstrap_z(complete_residuals(gaussian(5, 3, 1)), constant, 20, 1), DegeneracyError);
}

TEST(NaiveBootstrap, MeanStatisticByHand) {
  Matrix E(3, 2);
  E << 1, 2,
       3, 4,
       5, 6;
  const std::vector<std::vector<std::size_t>> resamples{{0, 0, 1}, {2, 2, 2}, {0, 1, 2}};
  // Resampled means: (1+2+1+2+3+4)/6 = 13/6, 11/2, 7/2; observed mean 7/2.
  const double m1 = 13.0 / 6.0, m2 = 5.5, m3 = 3.5;
  const double avg = (m1 + m2 + m3) / 3.0;
  const double bias = avg - 3.5;
  const double sd = std::sqrt(((m1 - avg) * (m1 - avg) + (m2 - avg) * (m2 - avg) + (m3 - avg) * (m3 - avg)) / 2.0);
  const BootstrapReport rep = naive_bootstrap_z(complete_residuals(E), mean_statistic(), resamples);
  EXPECT_NEAR(rep.theta_bs, 3.5, 1e-14);
  EXPECT_NEAR(rep.bias_estimate, bias, 1e-14);
  EXPECT_NEAR(rep.z_bs, (3.5 - bias) / sd, 1e-12);
  EXPECT_EQ(rep.B, 3u);
}

TEST(NaiveBootstrap, RejectsNonPlugInAndBadInput) {
  Statistic s = mean_statistic();
  s.plug_in = false;
  EXPECT_THROW((void)naive_bootstrap_z(complete_residuals(gaussian(5, 3, 2)), s, 10, 1), ArgumentError);
  EXPECT_THROW((void)naive_bootstrap_z(complete_residuals(gaussian(5, 3, 2)), mean_statistic(), 1, 1),
               ArgumentError);
  ResidualPanel holes = complete_residuals(gaussian(5, 3, 2));
  holes.defined(0, 0) = false;
  EXPECT_THROW((void)naive_bootstrap_z(holes, mean_statistic(), 10, 1), ArgumentError);
}

TEST(NaiveBootstrap, SeededRowsAreReproducible) {
  EXPECT_EQ(bootstrap_rows(10, 4, 2), bootstrap_rows(10, 4, 2));
  EXPECT_NE(bootstrap_rows(10, 4, 2), bootstrap_rows(10, 4, 3));
  for (std::size_t i : bootstrap_rows(10, 4, 2)) EXPECT_LT(i, 10u);
  const auto r = complete_residuals(gaussian(10, 3, 3));
  std::vector<std::vector<std::size_t>> rows;
  for (std::size_t b = 0; b < 15; ++b) rows.push_back(bootstrap_rows(10, 4, b));
  EXPECT_EQ(naive_bootstrap_z(r, mean_statistic(), 15, 4).z_bs, naive_bootstrap_z(r, mean_statistic(), rows).z_bs);
}

TEST(NaivePermutation, SingleColumnIsRejected) {
  const StatisticFn s = mmc_statistic().evaluate;
  EXPECT_THROW((void)naive_perm_test(complete_residuals(gaussian(10, 1, 4)), s, 19, 1), ArgumentError);
}

TEST(NaivePermutation, ValidWithoutFactors) {
  const StatisticFn s = mmc_statistic().evaluate;
  const int reps = 500;
  int hits = 0;
  for (int rep = 0; rep < reps; ++rep) {
    const auto seed = static_cast<std::uint64_t>(rep);
    const ResidualPanel r = complete_residuals(gaussian(20, 8, 100 + seed));
    hits += naive_perm_test(r, s, 19, seed) <= 0.05 ? 1 : 0;
  }
  const double rate = static_cast<double>(hits) / reps;
  EXPECT_NEAR(rate, 0.05, 3 * std::sqrt(0.05 * 0.95 / reps));
}

TEST(NaivePermutation, ThreadsDoNotChangeResult) {
  const StatisticFn s = mmc_statistic().evaluate;
  const ResidualPanel r = complete_residuals(gaussian(20, 8, 5));
  EXPECT_EQ(naive_perm_test(r, s, 49, 3, 1), naive_perm_test(r, s, 49, 3, 8));
}

TEST(NaiveBootstrap, LevelWithoutFactors) {
  const int reps = 300;
  int hits = 0;
  for (int rep = 0; rep < reps; ++rep) {
    const auto seed = static_cast<std::uint64_t>(rep);
    const ResidualPanel r = complete_residuals(gaussian(40, 8, 100 + seed));
    hits += std::abs(naive_bootstrap_z(r, mmc_statistic(), 100, seed).z_bs) >= 1.959963984540054 ? 1 : 0;
  }
  const double rate = static_cast<double>(hits) / reps;
  EXPECT_LE(rate, 0.05 + 3 * std::sqrt(0.05 * 0.95 / reps));
}
