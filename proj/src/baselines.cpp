#include "mosaic/baselines.hpp"

#include <cmath>
#include <numeric>

#include "mosaic/errors.hpp"
#include "mosaic/parallel.hpp"
#include "mosaic/permute.hpp"
#include "mosaic/random.hpp"

namespace mosaic {

namespace {

constexpr const char* kModule = "baselines";

void require_complete(const ResidualPanel& ols) {
  if (!ols.complete()) throw ArgumentError(kModule, "baselines need a complete residual panel");
  if (ols.p() < 2) throw ArgumentError(kModule, "baselines need at least 2 assets");
  if (ols.T() < 2) throw ArgumentError(kModule, "baselines need at least 2 timepoints");
}

}  // namespace

double naive_perm_test(const ResidualPanel& ols, const StatisticFn& statistic, std::size_t R, std::uint64_t seed,
                       unsigned threads) {
  require_complete(ols);
  if (R < 1) throw ArgumentError(kModule, "need at least one permutation replicate");
  const double observed = statistic(ols);
  std::vector<double> draws(R);
  parallel_for(R, threads, [&](std::size_t r) {
    ResidualPanel shuffled = ols;
    std::vector<Eigen::Index> order(ols.T());
    for (Eigen::Index j = 0; j < ols.values.cols(); ++j) {
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      auto eng = rng::engine(seed, {rng::stream::kNaivePermutation, r + 1, static_cast<std::uint64_t>(j)});
      rng::shuffle(std::span<Eigen::Index>(order), eng);
      for (std::size_t t = 0; t < order.size(); ++t) {
        shuffled.values(static_cast<Eigen::Index>(t), j) = ols.values(order[t], j);
      }
    }
    draws[r] = statistic(shuffled);
  });
  return pvalue(observed, draws);
}

std::vector<std::size_t> bootstrap_rows(std::size_t T, std::uint64_t seed, std::size_t b) {
  auto eng = rng::engine(seed, {rng::stream::kBootstrap, b});
  std::vector<std::size_t> rows(T);
  for (auto& r : rows) r = rng::uniform_index(eng, T);
  return rows;
}

BootstrapReport naive_bootstrap_z(const ResidualPanel& ols, const Statistic& statistic,
                                  const std::vector<std::vector<std::size_t>>& resamples, unsigned threads) {
  require_complete(ols);
  if (!statistic.plug_in) {
    throw ArgumentError(kModule, "statistic '" + statistic.name +
                                     "' is not a plug-in functional of the row distribution, so the bootstrap "
                                     "parameter value is undefined");
  }
  const std::size_t B = resamples.size();
  if (B < 2) throw ArgumentError(kModule, "bootstrap needs B >= 2");
  const double theta = statistic.evaluate(ols);
  std::vector<double> draws(B);
  parallel_for(B, threads, [&](std::size_t b) {
    if (resamples[b].size() != ols.T()) throw ArgumentError(kModule, "resample must list T row indices");
    ResidualPanel boot = ols;
    for (std::size_t t = 0; t < ols.T(); ++t) {
      if (resamples[b][t] >= ols.T()) throw ArgumentError(kModule, "resample row index out of range");
      boot.values.row(static_cast<Eigen::Index>(t)) = ols.values.row(static_cast<Eigen::Index>(resamples[b][t]));
    }
    draws[b] = statistic.evaluate(boot);
  });
  double mean = 0.0;
  for (double d : draws) mean += d;
  mean /= static_cast<double>(B);
  double var = 0.0;
  for (double d : draws) var += (d - mean) * (d - mean);
  var /= static_cast<double>(B - 1);
  if (!(var > 0.0)) throw DegeneracyError(kModule, "bootstrap replicates have zero variance");
  BootstrapReport report;
  report.theta_bs = theta;
  report.bias_estimate = mean - theta;
  report.z_bs = (theta - report.bias_estimate) / std::sqrt(var);
  report.B = B;
  return report;
}

BootstrapReport naive_bootstrap_z(const ResidualPanel& ols, const Statistic& statistic, std::size_t B,
                                  std::uint64_t seed, unsigned threads) {
  if (B < 2) throw ArgumentError(kModule, "bootstrap needs B >= 2");
  std::vector<std::vector<std::size_t>> resamples(B);
  for (std::size_t b = 0; b < B; ++b) resamples[b] = bootstrap_rows(ols.T(), seed, b);
  return naive_bootstrap_z(ols, statistic, resamples, threads);
}

}  // namespace mosaic
