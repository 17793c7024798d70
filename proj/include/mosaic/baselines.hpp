#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mosaic/residuals.hpp"
#include "mosaic/stats.hpp"

namespace mosaic {

// Comparison baselines. Both ignore the estimation error in OLS residuals and
// are not valid tests; they exist to show how badly that goes.

/// Permutes every column of the OLS residuals independently and returns the
/// usual inclusive-tie p-value.
[[nodiscard]] double naive_perm_test(const ResidualPanel& ols, const StatisticFn& statistic, std::size_t R,
                                     std::uint64_t seed, unsigned threads = 1);

struct BootstrapReport {
  double bias_estimate = 0.0;
  double z_bs = 0.0;
  double theta_bs = 0.0;
  std::size_t B = 0;
};

/// Row bootstrap Z statistic. Needs a plug-in statistic.
[[nodiscard]] BootstrapReport naive_bootstrap_z(const ResidualPanel& ols, const Statistic& statistic, std::size_t B,
                                                std::uint64_t seed, unsigned threads = 1);

/// Same with the resampled row indices given explicitly (one vector of T
/// indices per bootstrap replicate).
[[nodiscard]] BootstrapReport naive_bootstrap_z(const ResidualPanel& ols, const Statistic& statistic,
                                                const std::vector<std::vector<std::size_t>>& resamples,
                                                unsigned threads = 1);

/// Row indices used by the seeded bootstrap for replicate b.
[[nodiscard]] std::vector<std::size_t> bootstrap_rows(std::size_t T, std::uint64_t seed, std::size_t b);

}  // namespace mosaic
