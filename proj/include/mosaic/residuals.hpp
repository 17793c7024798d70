#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mosaic/panel.hpp"
#include "mosaic/tiling.hpp"

namespace mosaic {

/// Dense residual panel. Cells with defined == false are outside every tile
/// (or unobserved) and must not be read.
struct ResidualPanel {
  Matrix values;
  Mask defined;

  [[nodiscard]] std::size_t T() const noexcept { return static_cast<std::size_t>(values.rows()); }
  [[nodiscard]] std::size_t p() const noexcept { return static_cast<std::size_t>(values.cols()); }
  [[nodiscard]] bool complete() const { return defined.size() == 0 || defined.all(); }
};

/// Every defined-cell mask of true.
ResidualPanel complete_residuals(Matrix values);

/// Larger values must mean stronger evidence against the null.
using StatisticFn = std::function<double(const ResidualPanel&)>;
using MultiStatisticFn = std::function<std::vector<double>(const ResidualPanel&)>;

enum class RankPolicy {
  kError,   // rank deficiency after deduplication raises RankError
  kReduce,  // project onto the complement of the column space instead
};

/// I - L (L'L)^-1 L' for the exposures of one tile, built from a column-pivoted
/// Householder QR. Exact duplicate columns are dropped first. An empty L gives
/// the identity.
[[nodiscard]] Matrix tile_projection(const Matrix& L, std::span<const std::string> factor_ids = {},
                                     RankPolicy policy = RankPolicy::kError);

struct MosaicResiduals {
  Tiling tiling;
  std::vector<Matrix> blocks;       // |B_m| x |G_m|, rows follow tile.batch
  std::vector<Matrix> projectors;   // |G_m| x |G_m|

  /// Scatters the blocks into a T x p panel.
  [[nodiscard]] ResidualPanel materialize() const;
};

/// Residualizes each tile separately. Tiles are independent and may be
/// processed on several threads; the result does not depend on `threads`.
[[nodiscard]] MosaicResiduals mosaic_residuals(const ReturnsPanel& panel, const ExposureSeries& exposures,
                                               const Tiling& tiling, unsigned threads = 1,
                                               RankPolicy policy = RankPolicy::kError);

/// Residual block of a single tile, Y(batch, group) * H.
[[nodiscard]] Matrix tile_residuals(const ReturnsPanel& panel, const ExposureSeries& exposures, const Tile& tile,
                                    RankPolicy policy = RankPolicy::kError);

/// Cross-sectional OLS residuals using the whole exposure matrix, computed per
/// exposure segment over the assets observed throughout that segment.
[[nodiscard]] ResidualPanel ols_residuals(const ReturnsPanel& panel, const ExposureSeries& exposures,
                                          RankPolicy policy = RankPolicy::kError);

/// Running sums for the within-tile covariance estimate. Rows of each block
/// are sorted before accumulation, so the result is bit-for-bit independent
/// of the row order inside a tile.
class CovarianceAccumulator {
 public:
  explicit CovarianceAccumulator(std::size_t p);

  void add(const Matrix& block, std::span<const std::size_t> group);
  [[nodiscard]] Matrix estimate() const;
  [[nodiscard]] bool empty() const noexcept { return empty_; }

 private:
  Matrix count_;
  Matrix sum_;   // sum_(a, b) = sum of residuals of a over times a and b were co-grouped
  Matrix cross_;
  bool empty_ = true;
};

/// Within-tile covariance using only the tiles whose batch ordinal (see
/// tile_batch_ordinals) is listed. Pairs never co-grouped get 0.
[[nodiscard]] Matrix within_tile_covariance(const MosaicResiduals& mosaic, std::span<const std::size_t> batches_used);

/// Writes defined cells in the returns CSV schema.
void write_residuals(std::ostream& out, const ResidualPanel& residuals, const std::vector<std::string>& times,
                     const std::vector<std::string>& assets);

}  // namespace mosaic
