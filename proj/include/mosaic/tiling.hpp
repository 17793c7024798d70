#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mosaic/panel.hpp"

namespace mosaic {

/// Rectangle batch x group of the residual panel. Both index lists are sorted.
struct Tile {
  std::vector<std::size_t> batch;
  std::vector<std::size_t> group;

  bool operator==(const Tile&) const = default;
};

struct Tiling {
  std::vector<Tile> tiles;
  std::size_t T = 0;
  std::size_t p = 0;

  bool operator==(const Tiling&) const = default;
};

enum class GroupRounding { kCeil, kFloor };

/// max(2, ceil(p / 5k)), or the floor variant.
[[nodiscard]] std::size_t group_count(std::size_t p, std::size_t k, GroupRounding rounding = GroupRounding::kCeil);

struct TilingOptions {
  std::size_t batch_size = 10;
  std::optional<std::size_t> groups;  // overrides group_count
  GroupRounding rounding = GroupRounding::kCeil;
};

/// Consecutive blocks of `batch_size` timepoints split at every change-point.
/// One-row fragments merge into a neighbour inside the same exposure segment.
[[nodiscard]] std::vector<std::vector<std::size_t>> make_batches(std::size_t T, std::size_t batch_size,
                                                                 std::span<const std::size_t> change_points);

/// Splits `universe` uniformly at random into D groups whose sizes differ by
/// at most one (larger groups first). Each group is returned sorted.
[[nodiscard]] std::vector<std::vector<std::size_t>> random_partition(std::span<const std::size_t> universe,
                                                                     std::size_t D, std::uint64_t seed,
                                                                     std::size_t batch_ordinal);

/// Randomized default tiling. When `availability` is given, each batch only
/// uses the assets fully observed over its exposure segment.
[[nodiscard]] Tiling default_tiling(std::size_t T, std::size_t p, std::size_t k,
                                    std::span<const std::size_t> change_points,
                                    const AvailabilitySummary* availability, std::uint64_t seed,
                                    const TilingOptions& options = {});

struct TilingReport {
  bool disjoint = true;
  bool covers = true;
  bool exposures_constant = true;
  bool no_missing = true;
  std::vector<std::string> problems;

  [[nodiscard]] bool ok() const noexcept { return disjoint && covers && exposures_constant && no_missing; }
};

/// Checks disjointness, coverage of every cell whose asset is observed over
/// the whole exposure segment, constant exposures per batch and that no tile
/// touches a missing cell.
[[nodiscard]] TilingReport validate_tiling(const Tiling& tiling, const ExposureSeries& exposures,
                                           const Mask& available);

/// Pairs timepoints (0,1), (2,3), ... and gives both the exposures
/// [L_t L_t+1]. With odd T the final three timepoints share
/// [L_T-3 L_T-2 L_T-1] and every pair repeats its second block, so all
/// segments have 3k columns; duplicate columns are removed at regression time.
[[nodiscard]] ExposureSeries augment_exposures(const ExposureSeries& exposures);

/// Greedy anticlustering of assets given a covariance estimate. `initial`
/// seeds the D groups and `order` lists the remaining assets in visiting
/// order. Each asset joins the group (with spare capacity ceil(p/D)) whose
/// largest |sigma| with it is smallest, lowest index on ties.
[[nodiscard]] std::vector<std::vector<std::size_t>> greedy_anticluster(const Matrix& sigma,
                                                                       std::span<const std::size_t> initial,
                                                                       std::span<const std::size_t> order);

/// Seeded version: random distinct seeds and a random visiting order.
[[nodiscard]] std::vector<std::vector<std::size_t>> greedy_anticluster(const Matrix& sigma, std::size_t D,
                                                                       std::uint64_t seed);

/// sum over pairs in different groups of |sigma(j, j')|.
[[nodiscard]] double partition_objective(const Matrix& sigma, const std::vector<std::vector<std::size_t>>& groups);

/// Batch 1 is grouped as in default_tiling; later batches are grouped by
/// greedy_anticluster on the within-tile covariance of earlier batches.
[[nodiscard]] Tiling adaptive_tiling(const ReturnsPanel& panel, const ExposureSeries& exposures, std::size_t k,
                                     std::uint64_t seed, const TilingOptions& options = {},
                                     const AvailabilitySummary* availability = nullptr);

/// Batch ordinal of each tile (batches numbered in time order).
[[nodiscard]] std::vector<std::size_t> tile_batch_ordinals(const Tiling& tiling);

nlohmann::json tiling_to_json(const Tiling& tiling);
Tiling tiling_from_json(const nlohmann::json& j);
nlohmann::json report_to_json(const TilingReport& report);

}  // namespace mosaic
