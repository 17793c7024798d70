#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include <boost/math/distributions/chi_squared.hpp>

#include "mosaic/permute.hpp"
#include "mosaic/stats.hpp"
#include "support.hpp"

using namespace mosaic;
using mosaic::testing::gaussian;

namespace {

// Asymptotic two-sample Kolmogorov-Smirnov p-value.
double ks_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  const double ne = static_cast<double>(a.size() * b.size()) / static_cast<double>(a.size() + b.size());
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  double q = 0.0;
  for (int k = 1; k <= 100; ++k) q += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(q, 0.0, 1.0);
}

MosaicResiduals null_mosaic(std::size_t T, std::size_t p, std::size_t k, std::uint64_t seed) {
  const Matrix L = gaussian(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k), seed * 3 + 1);
  const ReturnsPanel panel = make_complete_panel(gaussian(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(p), seed * 3 + 2));
  const auto ex = constant_exposures(L, T);
  const Tiling t = default_tiling(T, p, k, {}, nullptr, seed);
  return mosaic_residuals(panel, ex, t);
}

StatisticFn mmc_fn() {
  return [](const ResidualPanel& r) { return mmc(empirical_correlation(r)); };
}

}  // namespace

TEST(PValue, Examples) {
  std::vector<double> below(99);
  std::iota(below.begin(), below.end(), 0.0);
  EXPECT_DOUBLE_EQ(pvalue(1000.0, below), 1.0 / 100.0);
  EXPECT_DOUBLE_EQ(pvalue(-1.0, below), 1.0);
  const std::vector<double> ties{3, 3, 3, 3, 1, 1, 1, 1, 1};
  EXPECT_DOUBLE_EQ(pvalue(3.0, ties), 0.5);
}

TEST(ExactZ, Examples) {
  EXPECT_NEAR(exact_z(0.05), 1.6449, 1e-4);
  EXPECT_NEAR(exact_z(0.01), 2.3263, 1e-4);
  EXPECT_EQ(exact_z(0.5), 0.0);
  EXPECT_EQ(exact_z(1.0), 0.0);
}

TEST(ApproxZ, Examples) {
  const std::vector<double> draws{0, 0, 0};
  EXPECT_NEAR(approx_z(2.0, draws), 1.7321, 1e-4);
  const std::vector<double> flat{1, 1, 1};
  EXPECT_EQ(approx_z(1.0, flat), 0.0);
}

TEST(ApproxZ, SumAndSquaresIdentity) {
  const Matrix v = gaussian(1, 50, 8);
  std::vector<double> values(v.data(), v.data() + 50);
  const auto z = approx_z_all(values);
  double s = 0.0, ss = 0.0;
  for (double x : z) {
    s += x;
    ss += x * x;
  }
  EXPECT_NEAR(s, 0.0, 1e-10);
  EXPECT_NEAR(ss, 50.0, 1e-10);
  EXPECT_DOUBLE_EQ(z[0], approx_z(values[0], std::span<const double>(values).subspan(1)));
}

TEST(Threshold, RejectsExactlyWhenPValueAtMostAlpha) {
  const Matrix v = gaussian(1, 99, 9);
  std::vector<double> draws(v.data(), v.data() + 99);
  for (double alpha : {0.01, 0.05, 0.1}) {
    const double thr = permutation_threshold(draws, alpha);
    for (double obs = -3.0; obs <= 3.0; obs += 0.01) {
      EXPECT_EQ(obs > thr, pvalue(obs, draws) <= alpha) << obs;
    }
    for (double d : draws) EXPECT_EQ(d > thr, pvalue(d, draws) <= alpha);
  }
  const std::vector<double> few{1, 2, 3};
  EXPECT_TRUE(std::isinf(permutation_threshold(few, 0.05)));
}

TEST(SamplePermutations, IdentityAndDeterminism) {
  const Tiling t{{Tile{{0}, {0, 1}}, Tile{{1, 2, 3}, {0, 1}}}, 4, 2};
  const auto a = sample_permutations(t, 20, 5);
  const auto b = sample_permutations(t, 20, 5);
  for (std::size_t r = 0; r <= 20; ++r) {
    EXPECT_EQ(a.order(r, 0).size(), 1u);
    EXPECT_EQ(a.order(r, 0)[0], 0u);
    EXPECT_TRUE(std::equal(a.order(r, 1).begin(), a.order(r, 1).end(), b.order(r, 1).begin()));
    std::vector<std::uint32_t> sorted(a.order(r, 1).begin(), a.order(r, 1).end());
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, (std::vector<std::uint32_t>{0, 1, 2}));
  }
  EXPECT_EQ(std::vector<std::uint32_t>(a.order(0, 1).begin(), a.order(0, 1).end()),
            (std::vector<std::uint32_t>{0, 1, 2}));
  const auto direct = replicate_order(3, 5, 7, 1);
  EXPECT_TRUE(std::equal(direct.begin(), direct.end(), a.order(7, 1).begin()));
}

TEST(SamplePermutations, UniformOverOrders) {
  const Tiling t{{Tile{{0, 1, 2}, {0}}}, 3, 1};
  const std::size_t R = 6000;
  const auto perms = sample_permutations(t, R, 21);
  std::map<std::vector<std::uint32_t>, double> counts;
  for (std::size_t r = 1; r <= R; ++r) {
    counts[std::vector<std::uint32_t>(perms.order(r, 0).begin(), perms.order(r, 0).end())] += 1.0;
  }
  ASSERT_EQ(counts.size(), 6u);
  const double expected = static_cast<double>(R) / 6.0;
  double chi2 = 0.0;
  for (const auto& [order, c] : counts) {
    chi2 += (c - expected) * (c - expected) / expected;
    EXPECT_LE(std::abs(c - expected), 3.0 * std::sqrt(R * (1.0 / 6.0) * (5.0 / 6.0)));
  }
  const boost::math::chi_squared_distribution<double> dist(5.0);
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 0.001);
}

TEST(PermutedView, IdentityReversalAndMultisets) {
  const MosaicResiduals mr = null_mosaic(20, 10, 1, 4);
  PermutationSet perms = sample_permutations(mr.tiling, 5, 6);
  const ResidualPanel base = mr.materialize();
  EXPECT_TRUE(permuted_view(mr, perms, 0).values == base.values);
  for (std::size_t r = 1; r <= 5; ++r) {
    const ResidualPanel view = permuted_view(mr, perms, r);
    for (const Tile& tile : mr.tiling.tiles) {
      std::vector<std::vector<double>> rows_a, rows_b;
      for (std::size_t t : tile.batch) {
        std::vector<double> ra, rb;
        for (std::size_t j : tile.group) {
          ra.push_back(base.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)));
          rb.push_back(view.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)));
        }
        rows_a.push_back(ra);
        rows_b.push_back(rb);
      }
      std::sort(rows_a.begin(), rows_a.end());
      std::sort(rows_b.begin(), rows_b.end());
      EXPECT_EQ(rows_a, rows_b);
    }
  }
  // Reversal on a single tile.
  MosaicResiduals single;
  single.tiling = Tiling{{Tile{{0, 1, 2}, {0, 1}}}, 3, 2};
  Matrix block(3, 2);
  block << 1, 2, 3, 4, 5, 6;
  single.blocks.push_back(block);
  PermutationSet rev(std::vector<std::size_t>{3}, 1);
  auto o = rev.order(1, 0);
  o[0] = 2;
  o[1] = 1;
  o[2] = 0;
  EXPECT_TRUE(permuted_view(single, rev, 1).values == block.colwise().reverse().eval());
}

TEST(AdaptivePValue, TrivialCases) {
  Matrix stats(1, 5);
  stats << 3, 3, 3, 3, 3;
  const MetaStatistic constant = [](const Matrix&, std::span<const std::size_t>) { return 1.0; };
  EXPECT_DOUBLE_EQ(adaptive_pvalue(stats, constant, 50, 1), 1.0);
  // K = 1 and the original ordering strictly greatest.
  Matrix s2(1, 3);
  s2 << 1, 2, 3;
  std::size_t calls = 0;
  const MetaStatistic first_call_wins = [&](const Matrix&, std::span<const std::size_t>) {
    return calls++ == 0 ? 10.0 : 0.0;
  };
  EXPECT_DOUBLE_EQ(adaptive_pvalue(s2, first_call_wins, 1, 2), 0.5);
}

TEST(AdaptivePValue, MaxStandardizedMetaByHand) {
  Matrix stats(2, 4);
  stats << 4, 1, 2, 3,
           0, 1, 1, 1;
  const std::vector<std::size_t> identity{0, 1, 2, 3};
  // Row 0: others {1,2,3}: mean 2, population sd sqrt(2/3); row 1: sd 0 contributes 0.
  EXPECT_NEAR(max_standardized_meta()(stats, identity), 2.0 / std::sqrt(2.0 / 3.0), 1e-12);
}

TEST(AdaptivePValue, SingleStatisticMatchesPlainPValueInDistribution) {
  const MetaStatistic pick = [](const Matrix& s, std::span<const std::size_t> order) {
    return s(0, static_cast<Eigen::Index>(order[0]));
  };
  std::vector<double> adaptive, plain;
  std::mt19937_64 eng(99);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 500; ++rep) {
    Matrix s(1, 20);
    for (Eigen::Index c = 0; c < 20; ++c) s(0, c) = normal(eng);
    std::vector<double> draws(s.data() + 1, s.data() + 20);
    plain.push_back(pvalue(s(0, 0), draws));
    adaptive.push_back(adaptive_pvalue(s, pick, 19, static_cast<std::uint64_t>(rep)));
  }
  EXPECT_GT(ks_pvalue(adaptive, plain), 0.01);
}

TEST(MosaicTest, SuperuniformUnderNull) {
  const int reps = 1000;
  int hits05 = 0, hits10 = 0;
  for (int rep = 0; rep < reps; ++rep) {
    const MosaicResiduals mr = null_mosaic(20, 10, 1, 1000 + static_cast<std::uint64_t>(rep));
    InferenceOptions opt;
    opt.R = 19;
    opt.seed = static_cast<std::uint64_t>(rep);
    const double p = mosaic_test(mr, mmc_fn(), opt).p_value;
    hits05 += p <= 0.05 ? 1 : 0;
    hits10 += p <= 0.10 ? 1 : 0;
  }
  for (auto [hits, alpha] : {std::pair{hits05, 0.05}, std::pair{hits10, 0.10}}) {
    const double sigma = std::sqrt(alpha * (1 - alpha) / reps);
    EXPECT_LE(static_cast<double>(hits) / reps, alpha + 3 * sigma);
  }
}

TEST(MosaicTest, ShiftAndMonotoneInvariance) {
  const MosaicResiduals mr = null_mosaic(30, 12, 1, 77);
  InferenceOptions opt;
  opt.R = 99;
  opt.seed = 3;
  const StatisticFn base = mmc_fn();
  const StatReport a = mosaic_test(mr, base, opt);
  // Shifts by powers of two are exact in floating point.
  const StatReport b = mosaic_test(mr, [&](const ResidualPanel& r) { return base(r) + 8.0; }, opt);
  const StatReport c = mosaic_test(mr, [&](const ResidualPanel& r) { return std::exp(3.0 * base(r)); }, opt);
  EXPECT_EQ(a.p_value, b.p_value);
  EXPECT_EQ(a.p_value, c.p_value);
  EXPECT_EQ(a.z_exact, b.z_exact);
}

TEST(MosaicTest, ThreadCountDoesNotChangeResults) {
  const MosaicResiduals mr = null_mosaic(30, 12, 1, 78);
  InferenceOptions opt;
  opt.R = 49;
  opt.seed = 4;
  opt.threads = 1;
  const StatReport a = mosaic_test(mr, mmc_fn(), opt);
  opt.threads = 8;
  const StatReport b = mosaic_test(mr, mmc_fn(), opt);
  EXPECT_EQ(a.null_draws, b.null_draws);
  EXPECT_EQ(a.p_value, b.p_value);
  EXPECT_EQ(a.z_approx, b.z_approx);
}

TEST(MosaicTest, ReportFieldsAndJson) {
  const MosaicResiduals mr = null_mosaic(20, 10, 1, 79);
  InferenceOptions opt;
  opt.R = 19;
  opt.seed = 11;
  StatReport rep = mosaic_test(mr, mmc_fn(), opt);
  EXPECT_EQ(rep.null_draws.size(), 19u);
  const double scaled = rep.p_value * 20.0;
  EXPECT_EQ(scaled, std::round(scaled));
  EXPECT_EQ(rep.z_exact, exact_z(rep.p_value));
  apply_bonferroni(rep, 4.0);
  const auto j = report_to_json(rep);
  for (const char* key : {"observed", "p_value", "z_exact", "z_approx", "threshold", "R", "seed"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_DOUBLE_EQ(j["bonferroni_p_value"].get<double>(), std::min(1.0, 4.0 * rep.p_value));
}

TEST(AdaptiveMosaicTest, ProducesValidPValue) {
  const MosaicResiduals mr = null_mosaic(20, 10, 1, 80);
  InferenceOptions opt;
  opt.R = 19;
  opt.K = 50;
  opt.seed = 2;
  const std::vector<double> gammas = default_gammas();
  const MultiStatisticFn fam = [&](const ResidualPanel& r) { return qmc_family(empirical_correlation(r), gammas); };
  const StatReport rep = adaptive_mosaic_test(mr, fam, max_standardized_meta(), opt);
  EXPECT_GT(rep.p_value, 0.0);
  EXPECT_LE(rep.p_value, 1.0);
  const double scaled = rep.p_value * 51.0;
  EXPECT_NEAR(scaled, std::round(scaled), 1e-9);
}
