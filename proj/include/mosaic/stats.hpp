#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mosaic/permute.hpp"
#include "mosaic/residuals.hpp"
#include "mosaic/tiling.hpp"

namespace mosaic {

/// Pearson correlations of selected assets over rows [begin, end).
struct CorrelationEstimate {
  Matrix matrix;                    // |assets| x |assets|
  std::vector<std::size_t> assets;  // panel column of each row/column
  std::size_t universe = 0;         // panel width p
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Columns whose cells are all defined over rows [begin, end).
[[nodiscard]] std::vector<std::size_t> defined_columns(const ResidualPanel& residuals, std::size_t begin,
                                                       std::size_t end);

/// Constant columns get correlation 0 with every other column.
[[nodiscard]] CorrelationEstimate empirical_correlation(const ResidualPanel& residuals, std::size_t begin,
                                                        std::size_t end, std::span<const std::size_t> assets);

/// All rows and every fully defined column.
[[nodiscard]] CorrelationEstimate empirical_correlation(const ResidualPanel& residuals);

/// mc_j = max over j' != j of |C(j, j')|.
[[nodiscard]] Vector max_abs_correlations(const CorrelationEstimate& corr);

[[nodiscard]] double mmc(const CorrelationEstimate& corr);

/// Order statistic number floor(gamma (n - 1)) (0-based) of the values.
[[nodiscard]] double lower_quantile(std::vector<double> values, double gamma);

[[nodiscard]] double qmc(const CorrelationEstimate& corr, double gamma);

[[nodiscard]] const std::vector<double>& default_gammas();

[[nodiscard]] std::vector<double> qmc_family(const CorrelationEstimate& corr, std::span<const double> gammas);

struct SparseLoading {
  Vector vector;  // length p, unit norm
  std::vector<std::size_t> support;
  std::size_t sparsity = 0;
};

/// Support = the ell assets with the largest mc_j (lower index wins ties);
/// loading = top eigenvector of the correlation submatrix on that support,
/// signed so that its largest-magnitude entry is positive.
[[nodiscard]] SparseLoading greedy_sparse_pca(const CorrelationEstimate& corr, std::size_t ell);

/// `count` values evenly spaced between `low` and p, rounded, clipped to
/// [1, p] and deduplicated.
[[nodiscard]] std::vector<std::size_t> sparsity_grid(std::size_t p, std::size_t count = 10, std::size_t low = 20);

struct BcvResult {
  double max_r2 = 0.0;
  std::vector<double> r2;
};

/// Out-of-sample R^2 of predicting each residual from the residuals outside
/// its tile through each candidate loading. Undefined cells count as 0 in the
/// off-tile inner products and are excluded from the R^2 sums.
[[nodiscard]] BcvResult bcv_r2(const ResidualPanel& test, const Tiling& test_tiling,
                               std::span<const SparseLoading> loadings);
[[nodiscard]] BcvResult bcv_r2(const MosaicResiduals& train, const MosaicResiduals& test,
                               std::span<const SparseLoading> loadings);

/// A named statistic. `plug_in` marks functionals of the empirical row law,
/// which is what the bootstrap baseline needs.
struct Statistic {
  std::string name;
  StatisticFn evaluate;
  bool plug_in = false;
};

[[nodiscard]] Statistic mmc_statistic();
[[nodiscard]] Statistic qmc_statistic(double gamma);
[[nodiscard]] MultiStatisticFn qmc_family_statistic(std::vector<double> gammas);
[[nodiscard]] StatisticFn bcv_statistic(Tiling tiling, std::vector<SparseLoading> loadings);

struct StatisticConfig {
  std::string type = "mmc";  // mmc | qmc | adaptive_qmc | bcv_r2
  double gamma = 0.5;
  std::vector<double> gammas = default_gammas();
};

[[nodiscard]] StatisticConfig statistic_config_from_json(const nlohmann::json& j);
nlohmann::json statistic_config_to_json(const StatisticConfig& config);

struct TilingConfig {
  std::string mode = "default";  // default | adaptive
  TilingOptions options;
  bool augment = false;
  std::vector<std::size_t> extra_change_points;
};

/// Exposures after augmentation and extra change-points, as used for tiling
/// and residualization.
[[nodiscard]] ExposureSeries effective_exposures(const ExposureSeries& exposures, const TilingConfig& config);

/// Tiling for a panel; incomplete panels restrict each batch to the assets
/// observed throughout its exposure segment.
[[nodiscard]] Tiling build_tiling(const ReturnsPanel& panel, const ExposureSeries& exposures,
                                  const TilingConfig& config, std::uint64_t seed);

/// Mosaic test of a configured scalar or adaptive statistic.
[[nodiscard]] StatReport run_statistic(const MosaicResiduals& mosaic, const StatisticConfig& statistic,
                                       const InferenceOptions& options);

/// Mosaic test on windows [end - window, end) for end = window, window +
/// stride, ... <= T. Each window is tiled afresh with its own derived seed.
[[nodiscard]] std::vector<StatReport> rolling_analysis(const ReturnsPanel& panel, const ExposureSeries& exposures,
                                                       const TilingConfig& tiling, const StatisticConfig& statistic,
                                                       std::size_t window, std::size_t stride,
                                                       const InferenceOptions& options);

struct ImproveOptions {
  std::size_t split = 0;                // first row of the second fold
  std::optional<std::size_t> window;    // windows over the second fold
  std::size_t stride = 0;               // defaults to window
  std::vector<std::size_t> sparsities;  // empty: sparsity_grid
};

struct ImproveReport {
  std::vector<SparseLoading> loadings;  // dense loading first
  std::vector<BcvResult> bcv;           // observed BCV per window
  std::vector<StatReport> reports;
};

/// Fits sparse-PCA loadings on mosaic residuals of the first fold and tests
/// the maximum BCV R^2 on the second fold. Loadings stay fixed.
[[nodiscard]] ImproveReport improvement_analysis(const ReturnsPanel& panel, const ExposureSeries& exposures,
                                                 const TilingConfig& tiling, const ImproveOptions& improve,
                                                 const InferenceOptions& options);

}  // namespace mosaic
