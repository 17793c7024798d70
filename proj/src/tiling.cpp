#include "mosaic/tiling.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "mosaic/errors.hpp"
#include "mosaic/random.hpp"

namespace mosaic {

namespace {

constexpr const char* kModule = "tiling";

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> out(n);
  std::iota(out.begin(), out.end(), std::size_t{0});
  return out;
}

std::vector<std::size_t> segment_boundaries(std::size_t T, std::span<const std::size_t> change_points) {
  std::vector<std::size_t> bounds(change_points.begin(), change_points.end());
  bounds.push_back(0);
  bounds.push_back(T);
  std::sort(bounds.begin(), bounds.end());
  bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());
  for (std::size_t b : bounds) {
    if (b > T) throw ArgumentError(kModule, "change-point " + std::to_string(b) + " beyond T");
  }
  return bounds;
}

}  // namespace

std::size_t group_count(std::size_t p, std::size_t k, GroupRounding rounding) {
  if (p < 1 || k < 1) throw ArgumentError(kModule, "group_count needs p >= 1 and k >= 1");
  const std::size_t denom = 5 * k;
  const std::size_t ratio = rounding == GroupRounding::kCeil ? (p + denom - 1) / denom : p / denom;
  return std::max<std::size_t>(2, ratio);
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t T, std::size_t batch_size,
                                                   std::span<const std::size_t> change_points) {
  if (batch_size < 2) throw ArgumentError(kModule, "batch_size must be at least 2");
  std::vector<std::vector<std::size_t>> batches;
  if (T == 0) return batches;
  const auto bounds = segment_boundaries(T, change_points);
  for (std::size_t s = 0; s + 1 < bounds.size(); ++s) {
    const std::size_t begin = bounds[s];
    const std::size_t end = bounds[s + 1];
    if (end - begin < 2) {
      throw DegenerateBatchError(kModule, "exposure segment starting at t=" + std::to_string(begin) +
                                              " has a single timepoint; a one-row tile admits only the identity");
    }
    std::vector<std::vector<std::size_t>> pieces;
    std::size_t cursor = begin;
    while (cursor < end) {
      const std::size_t next_cut = std::min(end, (cursor / batch_size + 1) * batch_size);
      std::vector<std::size_t> piece(next_cut - cursor);
      std::iota(piece.begin(), piece.end(), cursor);
      pieces.push_back(std::move(piece));
      cursor = next_cut;
    }
    // Merge one-row fragments into the neighbouring piece of the same segment.
    for (std::size_t i = 0; i < pieces.size();) {
      if (pieces[i].size() >= 2 || pieces.size() == 1) {
        ++i;
        continue;
      }
      if (i > 0) {
        pieces[i - 1].insert(pieces[i - 1].end(), pieces[i].begin(), pieces[i].end());
      } else {
        pieces[i + 1].insert(pieces[i + 1].begin(), pieces[i].begin(), pieces[i].end());
      }
      pieces.erase(pieces.begin() + static_cast<std::ptrdiff_t>(i));
    }
    for (auto& piece : pieces) batches.push_back(std::move(piece));
  }
  return batches;
}

std::vector<std::vector<std::size_t>> random_partition(std::span<const std::size_t> universe, std::size_t D,
                                                       std::uint64_t seed, std::size_t batch_ordinal) {
  if (D == 0 || D > universe.size()) {
    throw ArgumentError(kModule, "cannot split " + std::to_string(universe.size()) + " assets into " +
                                     std::to_string(D) + " groups");
  }
  std::vector<std::size_t> shuffled(universe.begin(), universe.end());
  auto eng = rng::engine(seed, {rng::stream::kGrouping, batch_ordinal});
  rng::shuffle(std::span<std::size_t>(shuffled), eng);
  std::vector<std::vector<std::size_t>> groups(D);
  const std::size_t base = shuffled.size() / D;
  const std::size_t extra = shuffled.size() % D;
  std::size_t cursor = 0;
  for (std::size_t d = 0; d < D; ++d) {
    const std::size_t size = base + (d < extra ? 1 : 0);
    groups[d].assign(shuffled.begin() + static_cast<std::ptrdiff_t>(cursor),
                     shuffled.begin() + static_cast<std::ptrdiff_t>(cursor + size));
    std::sort(groups[d].begin(), groups[d].end());
    cursor += size;
  }
  return groups;
}

Tiling default_tiling(std::size_t T, std::size_t p, std::size_t k, std::span<const std::size_t> change_points,
                      const AvailabilitySummary* availability, std::uint64_t seed, const TilingOptions& options) {
  Tiling tiling;
  tiling.T = T;
  tiling.p = p;
  const auto batches = make_batches(T, options.batch_size, change_points);
  const auto bounds = segment_boundaries(T, change_points);
  const auto all_assets = iota_indices(p);
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const auto& batch = batches[i];
    std::span<const std::size_t> universe(all_assets);
    if (availability != nullptr) {
      const auto seg = static_cast<std::size_t>(
          std::upper_bound(bounds.begin(), bounds.end(), batch.front()) - bounds.begin() - 1);
      if (seg >= availability->per_segment_available.size()) {
        throw ArgumentError(kModule, "availability summary has fewer segments than the change-points imply");
      }
      universe = availability->per_segment_available[seg];
    }
    if (universe.size() < 2 * k || universe.size() < 2) {
      throw PowerlessConfigError(kModule, "batch at t=" + std::to_string(batch.front()) + " has " +
                                              std::to_string(universe.size()) + " assets for k=" +
                                              std::to_string(k) + " factors; need p >= 2k");
    }
    const std::size_t D = options.groups.value_or(group_count(universe.size(), std::max<std::size_t>(k, 1),
                                                              options.rounding));
    for (auto& group : random_partition(universe, D, seed, i)) {
      tiling.tiles.push_back(Tile{batch, std::move(group)});
    }
  }
  return tiling;
}

TilingReport validate_tiling(const Tiling& tiling, const ExposureSeries& exposures, const Mask& available) {
  TilingReport report;
  constexpr std::size_t kMaxProblems = 20;
  auto note = [&](std::string msg) {
    if (report.problems.size() < kMaxProblems) report.problems.push_back(std::move(msg));
  };
  const auto T = static_cast<Eigen::Index>(tiling.T);
  const auto p = static_cast<Eigen::Index>(tiling.p);
  if (available.rows() != T || available.cols() != p || exposures.T != tiling.T ||
      (tiling.T > 0 && exposures.p() != tiling.p)) {
    report.covers = false;
    note("tiling dimensions do not match the panel");
    return report;
  }
  Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic> owner = Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>::Constant(T, p, -1);
  for (std::size_t m = 0; m < tiling.tiles.size(); ++m) {
    const Tile& tile = tiling.tiles[m];
    if (tile.batch.empty() || tile.group.empty()) {
      report.covers = false;
      note("tile " + std::to_string(m) + " is empty");
      continue;
    }
    bool in_range = true;
    for (std::size_t t : tile.batch) in_range = in_range && t < tiling.T;
    for (std::size_t j : tile.group) in_range = in_range && j < tiling.p;
    if (!in_range) {
      report.covers = false;
      note("tile " + std::to_string(m) + " has indices outside the panel");
      continue;
    }
    for (std::size_t t : tile.batch) {
      for (std::size_t j : tile.group) {
        auto& cell = owner(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j));
        if (cell >= 0) {
          report.disjoint = false;
          note("tiles " + std::to_string(cell) + " and " + std::to_string(m) + " share cell (" + std::to_string(t) +
               "," + std::to_string(j) + ")");
        } else {
          cell = static_cast<long>(m);
        }
        if (!available(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j))) {
          report.no_missing = false;
          note("tile " + std::to_string(m) + " contains missing cell (" + std::to_string(t) + "," +
               std::to_string(j) + ")");
        }
      }
    }
    const std::size_t first_segment = exposures.segment_of(tile.batch.front());
    for (std::size_t t : tile.batch) {
      const std::size_t seg = exposures.segment_of(t);
      if (seg == first_segment) continue;
      const Matrix& a = exposures.matrices[first_segment];
      const Matrix& b = exposures.matrices[seg];
      bool same = true;
      for (std::size_t j : tile.group) {
        same = same && a.row(static_cast<Eigen::Index>(j)) == b.row(static_cast<Eigen::Index>(j));
      }
      if (!same) {
        report.exposures_constant = false;
        note("tile " + std::to_string(m) + " spans an exposure change between t=" + std::to_string(tile.batch.front()) +
             " and t=" + std::to_string(t));
        break;
      }
    }
  }
  for (std::size_t s = 0; s < exposures.segments(); ++s) {
    const auto [begin, end] = exposures.segment_range(s);
    for (Eigen::Index j = 0; j < p; ++j) {
      const auto len = static_cast<Eigen::Index>(end - begin);
      if (!available.col(j).segment(static_cast<Eigen::Index>(begin), len).all()) continue;
      for (std::size_t t = begin; t < end; ++t) {
        if (owner(static_cast<Eigen::Index>(t), j) < 0) {
          report.covers = false;
          note("observed cell (" + std::to_string(t) + "," + std::to_string(j) + ") is not in any tile");
        }
      }
    }
  }
  return report;
}

ExposureSeries augment_exposures(const ExposureSeries& exposures) {
  const std::size_t T = exposures.T;
  const bool odd = T % 2 == 1;
  const std::size_t blocks = odd ? 3 : 2;
  const auto k = static_cast<Eigen::Index>(exposures.k());
  const auto p = static_cast<Eigen::Index>(exposures.p());
  std::vector<std::string> ids;
  static constexpr const char* kSuffix[] = {".a", ".b", ".c"};
  for (std::size_t b = 0; b < blocks; ++b) {
    for (const auto& f : exposures.factor_ids) ids.push_back(f + kSuffix[b]);
  }
  std::vector<Matrix> per_time(T, Matrix(p, k * static_cast<Eigen::Index>(blocks)));
  auto fill = [&](std::size_t t, std::initializer_list<std::size_t> sources) {
    Eigen::Index col = 0;
    for (std::size_t s : sources) {
      per_time[t].middleCols(col, k) = exposures.at(s);
      col += k;
    }
  };
  const std::size_t paired_end = odd && T >= 3 ? T - 3 : (odd ? 0 : T);
  for (std::size_t t = 0; t + 1 < paired_end + 1 && t < paired_end; t += 2) {
    for (std::size_t u : {t, t + 1}) {
      if (odd) {
        fill(u, {t, t + 1, t + 1});
      } else {
        fill(u, {t, t + 1});
      }
    }
  }
  if (odd) {
    if (T >= 3) {
      for (std::size_t u = T - 3; u < T; ++u) fill(u, {T - 3, T - 2, T - 1});
    } else if (T == 1) {
      fill(0, {0, 0, 0});
    }
  }
  return exposures_from_timepoints(per_time, std::move(ids));
}

std::vector<std::vector<std::size_t>> greedy_anticluster(const Matrix& sigma, std::span<const std::size_t> initial,
                                                         std::span<const std::size_t> order) {
  const auto p = static_cast<std::size_t>(sigma.rows());
  const std::size_t D = initial.size();
  if (sigma.cols() != sigma.rows()) throw ArgumentError(kModule, "covariance estimate must be square");
  if (D == 0 || D > p) {
    throw ArgumentError(kModule, "cannot form " + std::to_string(D) + " groups from " + std::to_string(p) + " assets");
  }
  if (D + order.size() != p) throw ArgumentError(kModule, "initial seeds and visiting order must cover every asset");
  const std::size_t capacity = (p + D - 1) / D;
  std::vector<std::vector<std::size_t>> groups(D);
  std::vector<bool> assigned(p, false);
  auto claim = [&](std::size_t j) {
    if (j >= p || assigned[j]) throw ArgumentError(kModule, "asset listed twice or out of range");
    assigned[j] = true;
  };
  for (std::size_t d = 0; d < D; ++d) {
    claim(initial[d]);
    groups[d].push_back(initial[d]);
  }
  for (std::size_t j : order) {
    claim(j);
    std::size_t best = D;
    double best_value = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
      if (groups[d].size() >= capacity) continue;
      double worst = 0.0;
      for (std::size_t member : groups[d]) {
        worst = std::max(worst, std::abs(sigma(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(member))));
      }
      if (best == D || worst < best_value) {
        best = d;
        best_value = worst;
      }
    }
    groups[best].push_back(j);
  }
  for (auto& g : groups) std::sort(g.begin(), g.end());
  return groups;
}

std::vector<std::vector<std::size_t>> greedy_anticluster(const Matrix& sigma, std::size_t D, std::uint64_t seed) {
  const auto p = static_cast<std::size_t>(sigma.rows());
  if (D == 0 || D > p) {
    throw ArgumentError(kModule, "cannot form " + std::to_string(D) + " groups from " + std::to_string(p) + " assets");
  }
  auto shuffled = iota_indices(p);
  auto eng = rng::engine(seed, {rng::stream::kAnticluster});
  rng::shuffle(std::span<std::size_t>(shuffled), eng);
  return greedy_anticluster(sigma, std::span<const std::size_t>(shuffled).first(D),
                            std::span<const std::size_t>(shuffled).subspan(D));
}

double partition_objective(const Matrix& sigma, const std::vector<std::vector<std::size_t>>& groups) {
  std::vector<std::size_t> label(static_cast<std::size_t>(sigma.rows()), 0);
  for (std::size_t d = 0; d < groups.size(); ++d) {
    for (std::size_t j : groups[d]) label[j] = d;
  }
  double total = 0.0;
  for (Eigen::Index a = 0; a < sigma.rows(); ++a) {
    for (Eigen::Index b = 0; b < sigma.cols(); ++b) {
      if (label[static_cast<std::size_t>(a)] != label[static_cast<std::size_t>(b)]) total += std::abs(sigma(a, b));
    }
  }
  return total;
}

std::vector<std::size_t> tile_batch_ordinals(const Tiling& tiling) {
  std::map<std::vector<std::size_t>, std::size_t> first_time;
  for (const Tile& tile : tiling.tiles) first_time.emplace(tile.batch, 0);
  std::vector<std::pair<std::size_t, const std::vector<std::size_t>*>> order;
  for (const auto& [batch, _] : first_time) order.emplace_back(batch.empty() ? 0 : batch.front(), &batch);
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < order.size(); ++i) first_time[*order[i].second] = i;
  std::vector<std::size_t> out;
  out.reserve(tiling.tiles.size());
  for (const Tile& tile : tiling.tiles) out.push_back(first_time[tile.batch]);
  return out;
}

nlohmann::json tiling_to_json(const Tiling& tiling) {
  nlohmann::json tiles = nlohmann::json::array();
  for (const Tile& tile : tiling.tiles) tiles.push_back({{"batch", tile.batch}, {"group", tile.group}});
  return {{"tiles", tiles}, {"T", tiling.T}, {"p", tiling.p}};
}

Tiling tiling_from_json(const nlohmann::json& j) {
  try {
    Tiling tiling;
    tiling.T = j.at("T").get<std::size_t>();
    tiling.p = j.at("p").get<std::size_t>();
    for (const auto& t : j.at("tiles")) {
      Tile tile{t.at("batch").get<std::vector<std::size_t>>(), t.at("group").get<std::vector<std::size_t>>()};
      std::sort(tile.batch.begin(), tile.batch.end());
      std::sort(tile.group.begin(), tile.group.end());
      tiling.tiles.push_back(std::move(tile));
    }
    return tiling;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(kModule, std::string("malformed tiling JSON: ") + e.what());
  }
}

nlohmann::json report_to_json(const TilingReport& report) {
  return {{"ok", report.ok()},
          {"disjoint", report.disjoint},
          {"covers", report.covers},
          {"exposures_constant", report.exposures_constant},
          {"no_missing", report.no_missing},
          {"problems", report.problems}};
}

}  // namespace mosaic
