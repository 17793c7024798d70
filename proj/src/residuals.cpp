#include "mosaic/residuals.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "mosaic/errors.hpp"
#include "mosaic/parallel.hpp"

namespace mosaic {

namespace {

constexpr const char* kModule = "residuals";

Matrix gather(const Matrix& values, std::span<const std::size_t> rows, std::span<const std::size_t> cols) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = 0; b < cols.size(); ++b) {
      out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          values(static_cast<Eigen::Index>(rows[a]), static_cast<Eigen::Index>(cols[b]));
    }
  }
  return out;
}

Matrix exposure_rows(const Matrix& L, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), L.cols());
  for (std::size_t a = 0; a < rows.size(); ++a) out.row(static_cast<Eigen::Index>(a)) = L.row(static_cast<Eigen::Index>(rows[a]));
  return out;
}

}  // namespace

ResidualPanel complete_residuals(Matrix values) {
  ResidualPanel out;
  out.defined = Mask::Constant(values.rows(), values.cols(), true);
  out.values = std::move(values);
  return out;
}

Matrix tile_projection(const Matrix& L, std::span<const std::string> factor_ids, RankPolicy policy) {
  const Eigen::Index n = L.rows();
  if (L.cols() == 0) return Matrix::Identity(n, n);

  std::vector<Eigen::Index> kept;
  for (Eigen::Index c = 0; c < L.cols(); ++c) {
    const bool duplicate = std::any_of(kept.begin(), kept.end(), [&](Eigen::Index k) { return L.col(k) == L.col(c); });
    if (!duplicate) kept.push_back(c);
  }
  Matrix reduced(n, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) reduced.col(static_cast<Eigen::Index>(i)) = L.col(kept[i]);

  Eigen::ColPivHouseholderQR<Matrix> qr(reduced);
  const Eigen::Index rank = qr.rank();
  if (rank < reduced.cols() && policy == RankPolicy::kError) {
    std::vector<std::string> dropped;
    std::string names;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index i = rank; i < reduced.cols(); ++i) {
      const Eigen::Index original = kept[static_cast<std::size_t>(perm(i))];
      std::string name = static_cast<std::size_t>(original) < factor_ids.size()
                             ? factor_ids[static_cast<std::size_t>(original)]
                             : "column " + std::to_string(original);
      names += (names.empty() ? "" : ", ") + name;
      dropped.push_back(std::move(name));
    }
    throw RankError(kModule,
                    "exposures on " + std::to_string(n) + " assets have rank " + std::to_string(rank) + " < " +
                        std::to_string(reduced.cols()) + " columns; not identified: " + names,
                    std::move(dropped));
  }
  const Matrix Q = qr.householderQ() * Matrix::Identity(n, rank);
  Matrix H = Matrix::Identity(n, n) - Q * Q.transpose();
  return 0.5 * (H + H.transpose());
}

ResidualPanel MosaicResiduals::materialize() const {
  ResidualPanel out;
  const auto T = static_cast<Eigen::Index>(tiling.T);
  const auto p = static_cast<Eigen::Index>(tiling.p);
  out.values = Matrix::Zero(T, p);
  out.defined = Mask::Constant(T, p, false);
  for (std::size_t m = 0; m < tiling.tiles.size(); ++m) {
    const Tile& tile = tiling.tiles[m];
    const Matrix& block = blocks[m];
    for (std::size_t a = 0; a < tile.batch.size(); ++a) {
      for (std::size_t b = 0; b < tile.group.size(); ++b) {
        const auto t = static_cast<Eigen::Index>(tile.batch[a]);
        const auto j = static_cast<Eigen::Index>(tile.group[b]);
        out.values(t, j) = block(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        out.defined(t, j) = true;
      }
    }
  }
  return out;
}

Matrix tile_residuals(const ReturnsPanel& panel, const ExposureSeries& exposures, const Tile& tile, RankPolicy policy) {
  for (std::size_t t : tile.batch) {
    for (std::size_t j : tile.group) {
      if (!panel.available(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j))) {
        throw ArgumentError(kModule, "tile touches missing cell (" + std::to_string(t) + "," + std::to_string(j) + ")");
      }
    }
  }
  const Matrix L = exposure_rows(exposures.at(tile.batch.front()), tile.group);
  const Matrix H = tile_projection(L, exposures.factor_ids, policy);
  return gather(panel.values, tile.batch, tile.group) * H;
}

MosaicResiduals mosaic_residuals(const ReturnsPanel& panel, const ExposureSeries& exposures, const Tiling& tiling,
                                 unsigned threads, RankPolicy policy) {
  if (tiling.T != panel.T() || tiling.p != panel.p()) {
    throw ArgumentError(kModule, "tiling dimensions do not match the panel");
  }
  if (exposures.T != panel.T() || (panel.T() > 0 && exposures.p() != panel.p())) {
    throw ArgumentError(kModule, "exposure dimensions do not match the panel");
  }
  MosaicResiduals out;
  out.tiling = tiling;
  out.blocks.resize(tiling.tiles.size());
  out.projectors.resize(tiling.tiles.size());
  parallel_for(tiling.tiles.size(), threads, [&](std::size_t m) {
    const Tile& tile = tiling.tiles[m];
    for (std::size_t t : tile.batch) {
      for (std::size_t j : tile.group) {
        if (!panel.available(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j))) {
          throw ArgumentError(kModule, "tile " + std::to_string(m) + " touches missing cell (" + std::to_string(t) +
                                           "," + std::to_string(j) + ")");
        }
      }
    }
    const Matrix L = exposure_rows(exposures.at(tile.batch.front()), tile.group);
    out.projectors[m] = tile_projection(L, exposures.factor_ids, policy);
    out.blocks[m] = gather(panel.values, tile.batch, tile.group) * out.projectors[m];
  });
  return out;
}

ResidualPanel ols_residuals(const ReturnsPanel& panel, const ExposureSeries& exposures, RankPolicy policy) {
  const auto T = static_cast<Eigen::Index>(panel.T());
  const auto p = static_cast<Eigen::Index>(panel.p());
  if (exposures.T != panel.T() || (panel.T() > 0 && exposures.p() != panel.p())) {
    throw ArgumentError(kModule, "exposure dimensions do not match the panel");
  }
  ResidualPanel out;
  out.values = Matrix::Zero(T, p);
  out.defined = Mask::Constant(T, p, false);
  for (std::size_t s = 0; s < exposures.segments(); ++s) {
    const auto [begin, end] = exposures.segment_range(s);
    const auto len = static_cast<Eigen::Index>(end - begin);
    std::vector<std::size_t> assets;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (panel.available.col(j).segment(static_cast<Eigen::Index>(begin), len).all()) {
        assets.push_back(static_cast<std::size_t>(j));
      }
    }
    if (assets.empty()) continue;
    const Matrix H = tile_projection(exposure_rows(exposures.matrices[s], assets), exposures.factor_ids, policy);
    std::vector<std::size_t> times(end - begin);
    std::iota(times.begin(), times.end(), begin);
    const Matrix resid = gather(panel.values, times, assets) * H;
    for (std::size_t a = 0; a < times.size(); ++a) {
      for (std::size_t b = 0; b < assets.size(); ++b) {
        const auto t = static_cast<Eigen::Index>(times[a]);
        const auto j = static_cast<Eigen::Index>(assets[b]);
        out.values(t, j) = resid(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        out.defined(t, j) = true;
      }
    }
  }
  return out;
}

CovarianceAccumulator::CovarianceAccumulator(std::size_t p)
    : count_(Matrix::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p))),
      sum_(Matrix::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p))),
      cross_(Matrix::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p))) {}

void CovarianceAccumulator::add(const Matrix& block, std::span<const std::size_t> group) {
  if (static_cast<std::size_t>(block.cols()) != group.size()) {
    throw ArgumentError(kModule, "block width does not match its group");
  }
  // Canonical row order: lexicographic on the row values.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(block.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) {
    for (Eigen::Index c = 0; c < block.cols(); ++c) {
      if (block(x, c) != block(y, c)) return block(x, c) < block(y, c);
    }
    return false;
  });
  const auto rows = static_cast<double>(block.rows());
  for (std::size_t a = 0; a < group.size(); ++a) {
    const auto ja = static_cast<Eigen::Index>(group[a]);
    double col_sum = 0.0;
    for (Eigen::Index r : order) col_sum += block(r, static_cast<Eigen::Index>(a));
    for (std::size_t b = 0; b < group.size(); ++b) {
      const auto jb = static_cast<Eigen::Index>(group[b]);
      double prod = 0.0;
      for (Eigen::Index r : order) prod += block(r, static_cast<Eigen::Index>(a)) * block(r, static_cast<Eigen::Index>(b));
      count_(ja, jb) += rows;
      sum_(ja, jb) += col_sum;
      cross_(ja, jb) += prod;
    }
  }
  empty_ = empty_ && block.rows() == 0;
}

Matrix CovarianceAccumulator::estimate() const {
  const Eigen::Index p = count_.rows();
  Matrix sigma = Matrix::Zero(p, p);
  for (Eigen::Index a = 0; a < p; ++a) {
    for (Eigen::Index b = 0; b < p; ++b) {
      const double n = count_(a, b);
      if (n == 0.0) continue;
      sigma(a, b) = cross_(a, b) / n - (sum_(a, b) / n) * (sum_(b, a) / n);
    }
  }
  return sigma;
}

Matrix within_tile_covariance(const MosaicResiduals& mosaic, std::span<const std::size_t> batches_used) {
  if (batches_used.empty()) throw ArgumentError(kModule, "within_tile_covariance needs at least one batch");
  const auto ordinals = tile_batch_ordinals(mosaic.tiling);
  CovarianceAccumulator acc(mosaic.tiling.p);
  for (std::size_t m = 0; m < mosaic.tiling.tiles.size(); ++m) {
    if (std::find(batches_used.begin(), batches_used.end(), ordinals[m]) == batches_used.end()) continue;
    acc.add(mosaic.blocks[m], mosaic.tiling.tiles[m].group);
  }
  return acc.estimate();
}

void write_residuals(std::ostream& out, const ResidualPanel& residuals, const std::vector<std::string>& times,
                     const std::vector<std::string>& assets) {
  if (times.size() != residuals.T() || assets.size() != residuals.p()) {
    throw ArgumentError(kModule, "labels do not match the residual panel");
  }
  out << "date,asset_id,return\n";
  for (std::size_t t = 0; t < residuals.T(); ++t) {
    for (std::size_t j = 0; j < residuals.p(); ++j) {
      const auto ti = static_cast<Eigen::Index>(t);
      const auto ji = static_cast<Eigen::Index>(j);
      if (!residuals.defined(ti, ji)) continue;
      out << times[t] << ',' << assets[j] << ',' << format_double(residuals.values(ti, ji)) << '\n';
    }
  }
}

}  // namespace mosaic
