#include <algorithm>
#include <numeric>

#include "mosaic/errors.hpp"
#include "mosaic/random.hpp"
#include "mosaic/residuals.hpp"
#include "mosaic/tiling.hpp"

namespace mosaic {

Tiling adaptive_tiling(const ReturnsPanel& panel, const ExposureSeries& exposures, std::size_t k, std::uint64_t seed,
                       const TilingOptions& options, const AvailabilitySummary* availability) {
  const std::size_t T = panel.T();
  const std::size_t p = panel.p();
  if (exposures.T != T) throw ArgumentError("tiling", "exposure series length does not match the panel");
  // The first batch must agree with the non-adaptive construction, so build
  // that one and keep only its first batch.
  const Tiling initial = default_tiling(T, p, k, exposures.change_points, availability, seed, options);
  const auto batches = make_batches(T, options.batch_size, exposures.change_points);

  std::vector<std::size_t> all_assets(p);
  std::iota(all_assets.begin(), all_assets.end(), std::size_t{0});

  Tiling tiling;
  tiling.T = T;
  tiling.p = p;
  CovarianceAccumulator acc(p);
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    std::vector<std::vector<std::size_t>> groups;
    const std::size_t begin = cursor;
    while (cursor < initial.tiles.size() && initial.tiles[cursor].batch == batches[i]) ++cursor;
    if (i == 0) {
      for (std::size_t m = begin; m < cursor; ++m) groups.push_back(initial.tiles[m].group);
    } else {
      std::vector<std::size_t> universe;
      for (std::size_t m = begin; m < cursor; ++m) {
        universe.insert(universe.end(), initial.tiles[m].group.begin(), initial.tiles[m].group.end());
      }
      std::sort(universe.begin(), universe.end());
      const std::size_t D = cursor - begin;
      const Matrix full = acc.estimate();
      Matrix sigma(static_cast<Eigen::Index>(universe.size()), static_cast<Eigen::Index>(universe.size()));
      for (std::size_t a = 0; a < universe.size(); ++a) {
        for (std::size_t b = 0; b < universe.size(); ++b) {
          sigma(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
              full(static_cast<Eigen::Index>(universe[a]), static_cast<Eigen::Index>(universe[b]));
        }
      }
      const auto local = greedy_anticluster(sigma, D, rng::derive_seed(seed, {rng::stream::kAnticluster, i}));
      for (const auto& g : local) {
        std::vector<std::size_t> mapped;
        mapped.reserve(g.size());
        for (std::size_t idx : g) mapped.push_back(universe[idx]);
        groups.push_back(std::move(mapped));
      }
    }
    for (auto& group : groups) {
      Tile tile{batches[i], std::move(group)};
      if (i + 1 < batches.size()) acc.add(tile_residuals(panel, exposures, tile), tile.group);
      tiling.tiles.push_back(std::move(tile));
    }
  }
  return tiling;
}

}  // namespace mosaic
