#include "mosaic/permute.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "mosaic/errors.hpp"
#include "mosaic/parallel.hpp"
#include "mosaic/random.hpp"

namespace mosaic {

namespace {

constexpr const char* kModule = "permute";

nlohmann::json finite_or_null(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;
}

}  // namespace

PermutationSet::PermutationSet(std::vector<std::size_t> tile_sizes, std::size_t R)
    : sizes_(std::move(tile_sizes)), R_(R) {
  offsets_.reserve(sizes_.size());
  for (std::size_t n : sizes_) {
    offsets_.push_back(stride_);
    stride_ += n;
  }
  data_.resize(stride_ * (R_ + 1));
  for (std::size_t r = 0; r <= R_; ++r) {
    for (std::size_t m = 0; m < sizes_.size(); ++m) {
      auto o = order(r, m);
      std::iota(o.begin(), o.end(), std::uint32_t{0});
    }
  }
}

std::span<const std::uint32_t> PermutationSet::order(std::size_t r, std::size_t m) const {
  return {data_.data() + r * stride_ + offsets_[m], sizes_[m]};
}

std::span<std::uint32_t> PermutationSet::order(std::size_t r, std::size_t m) {
  return {data_.data() + r * stride_ + offsets_[m], sizes_[m]};
}

std::vector<std::uint32_t> replicate_order(std::size_t n, std::uint64_t seed, std::size_t r, std::size_t m) {
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), std::uint32_t{0});
  auto eng = rng::engine(seed, {rng::stream::kPermutation, r, m});
  rng::shuffle(std::span<std::uint32_t>(order), eng);
  return order;
}

PermutationSet sample_permutations(const Tiling& tiling, std::size_t R, std::uint64_t seed) {
  if (R < 1) throw ArgumentError(kModule, "need at least one permutation replicate");
  std::vector<std::size_t> sizes;
  sizes.reserve(tiling.tiles.size());
  for (const Tile& tile : tiling.tiles) sizes.push_back(tile.batch.size());
  PermutationSet perms(sizes, R);
  for (std::size_t r = 1; r <= R; ++r) {
    for (std::size_t m = 0; m < sizes.size(); ++m) {
      const auto drawn = replicate_order(sizes[m], seed, r, m);
      std::copy(drawn.begin(), drawn.end(), perms.order(r, m).begin());
    }
  }
  return perms;
}

ResidualPanel permuted_view(const MosaicResiduals& mosaic, const PermutationSet& perms, std::size_t r) {
  if (r > perms.R()) throw ArgumentError(kModule, "replicate index beyond R");
  if (perms.tiles() != mosaic.tiling.tiles.size()) {
    throw ArgumentError(kModule, "permutation set does not match the tiling");
  }
  ResidualPanel out;
  const auto T = static_cast<Eigen::Index>(mosaic.tiling.T);
  const auto p = static_cast<Eigen::Index>(mosaic.tiling.p);
  out.values = Matrix::Zero(T, p);
  out.defined = Mask::Constant(T, p, false);
  for (std::size_t m = 0; m < mosaic.tiling.tiles.size(); ++m) {
    const Tile& tile = mosaic.tiling.tiles[m];
    const Matrix& block = mosaic.blocks[m];
    const auto order = perms.order(r, m);
    for (std::size_t b = 0; b < tile.group.size(); ++b) {
      const auto j = static_cast<Eigen::Index>(tile.group[b]);
      for (std::size_t a = 0; a < tile.batch.size(); ++a) {
        const auto t = static_cast<Eigen::Index>(tile.batch[a]);
        out.values(t, j) = block(static_cast<Eigen::Index>(order[a]), static_cast<Eigen::Index>(b));
        out.defined(t, j) = true;
      }
    }
  }
  return out;
}

double pvalue(double observed, std::span<const double> null_draws) {
  if (null_draws.empty()) throw ArgumentError(kModule, "p-value needs at least one null draw");
  const auto hits = std::count_if(null_draws.begin(), null_draws.end(), [&](double s) { return observed <= s; });
  return (1.0 + static_cast<double>(hits)) / (static_cast<double>(null_draws.size()) + 1.0);
}

double exact_z(double p) {
  if (!(p > 0.0) || p > 1.0) throw ArgumentError(kModule, "p-value must lie in (0, 1]");
  if (p >= 0.5) return 0.0;
  return boost::math::quantile(boost::math::complement(boost::math::normal_distribution<double>(), p));
}

std::vector<double> approx_z_all(std::span<const double> values) {
  const auto n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= n;
  std::vector<double> z(values.size(), 0.0);
  if (!(var > 0.0)) return z;
  const double sd = std::sqrt(var);
  for (std::size_t i = 0; i < values.size(); ++i) z[i] = (values[i] - mean) / sd;
  return z;
}

double approx_z(double observed, std::span<const double> null_draws) {
  if (null_draws.empty()) throw ArgumentError(kModule, "approximate Z needs at least one null draw");
  std::vector<double> all;
  all.reserve(null_draws.size() + 1);
  all.push_back(observed);
  all.insert(all.end(), null_draws.begin(), null_draws.end());
  return approx_z_all(all).front();
}

double permutation_threshold(std::span<const double> null_draws, double alpha) {
  const std::size_t R = null_draws.size();
  // The epsilon keeps alpha (R + 1) integral when it should be (0.05 * 100).
  const auto k = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(R + 1) + 1e-9));
  if (k == 0) return std::numeric_limits<double>::infinity();
  if (k > R) return -std::numeric_limits<double>::infinity();
  std::vector<double> sorted(null_draws.begin(), null_draws.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end(),
                   std::greater<>());
  return sorted[k - 1];
}

MetaStatistic max_standardized_meta() {
  return [](const Matrix& stats, std::span<const std::size_t> order) {
    const auto obs = static_cast<Eigen::Index>(order[0]);
    const Eigen::Index cols = stats.cols();
    const auto n = static_cast<double>(cols - 1);
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < stats.rows(); ++i) {
      double mean = 0.0;
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (c != obs) mean += stats(i, c);
      }
      mean /= n;
      double var = 0.0;
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (c != obs) var += (stats(i, c) - mean) * (stats(i, c) - mean);
      }
      var /= n;
      const double z = var > 0.0 ? (stats(i, obs) - mean) / std::sqrt(var) : 0.0;
      best = std::max(best, z);
    }
    return best;
  };
}

AdaptiveResult adaptive_test(const Matrix& stats, const MetaStatistic& meta, std::size_t K, std::uint64_t seed) {
  if (K < 1) throw ArgumentError(kModule, "adaptive layer needs K >= 1");
  if (stats.cols() < 2 || stats.rows() < 1) throw ArgumentError(kModule, "statistic table needs d >= 1 rows and R >= 1");
  const auto cols = static_cast<std::size_t>(stats.cols());
  std::vector<std::size_t> identity(cols);
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  AdaptiveResult result;
  result.observed = meta(stats, identity);
  result.draws.reserve(K);
  std::vector<std::size_t> order(cols);
  for (std::size_t l = 0; l < K; ++l) {
    order = identity;
    auto eng = rng::engine(seed, {rng::stream::kMeta, l});
    rng::shuffle(std::span<std::size_t>(order), eng);
    result.draws.push_back(meta(stats, order));
  }
  result.p_value = pvalue(result.observed, result.draws);
  return result;
}

double adaptive_pvalue(const Matrix& stats, const MetaStatistic& meta, std::size_t K, std::uint64_t seed) {
  return adaptive_test(stats, meta, K, seed).p_value;
}

StatReport make_report(double observed, std::vector<double> null_draws, double alpha, std::uint64_t seed) {
  StatReport report;
  report.observed = observed;
  report.p_value = pvalue(observed, null_draws);
  report.z_exact = exact_z(report.p_value);
  report.z_approx = approx_z(observed, null_draws);
  report.threshold = permutation_threshold(null_draws, alpha);
  report.R = null_draws.size();
  report.seed = seed;
  report.null_draws = std::move(null_draws);
  return report;
}

void apply_bonferroni(StatReport& report, double divisor) {
  if (!(divisor >= 1.0)) throw ArgumentError(kModule, "Bonferroni divisor must be at least 1");
  report.bonferroni_p = std::min(1.0, report.p_value * divisor);
}

nlohmann::json report_to_json(const StatReport& report) {
  nlohmann::json j = {{"observed", finite_or_null(report.observed)},
                      {"p_value", report.p_value},
                      {"z_exact", report.z_exact},
                      {"z_approx", report.z_approx},
                      {"threshold", finite_or_null(report.threshold)},
                      {"R", report.R},
                      {"seed", report.seed}};
  if (report.bonferroni_p) j["bonferroni_p_value"] = *report.bonferroni_p;
  if (!report.label.empty()) j["window_end"] = report.label;
  return j;
}

std::vector<double> evaluate_replicates(const MosaicResiduals& mosaic, const PermutationSet& perms,
                                        const StatisticFn& statistic, unsigned threads) {
  std::vector<double> values(perms.R() + 1);
  parallel_for(values.size(), threads, [&](std::size_t r) { values[r] = statistic(permuted_view(mosaic, perms, r)); });
  return values;
}

Matrix evaluate_replicates(const MosaicResiduals& mosaic, const PermutationSet& perms,
                           const MultiStatisticFn& statistic, unsigned threads) {
  std::vector<std::vector<double>> columns(perms.R() + 1);
  parallel_for(columns.size(), threads, [&](std::size_t r) { columns[r] = statistic(permuted_view(mosaic, perms, r)); });
  const std::size_t d = columns.front().size();
  Matrix table(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t r = 0; r < columns.size(); ++r) {
    if (columns[r].size() != d) throw InvariantError(kModule, "statistic family changed length across replicates");
    for (std::size_t i = 0; i < d; ++i) table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) = columns[r][i];
  }
  return table;
}

StatReport mosaic_test(const MosaicResiduals& mosaic, const StatisticFn& statistic, const InferenceOptions& options) {
  const auto perms = sample_permutations(mosaic.tiling, options.R, options.seed);
  auto values = evaluate_replicates(mosaic, perms, statistic, options.threads);
  const double observed = values.front();
  values.erase(values.begin());
  return make_report(observed, std::move(values), options.alpha, options.seed);
}

StatReport adaptive_mosaic_test(const MosaicResiduals& mosaic, const MultiStatisticFn& family,
                                const MetaStatistic& meta, const InferenceOptions& options) {
  const auto perms = sample_permutations(mosaic.tiling, options.R, options.seed);
  const Matrix table = evaluate_replicates(mosaic, perms, family, options.threads);
  auto result = adaptive_test(table, meta, options.K, options.seed);
  StatReport report = make_report(result.observed, std::move(result.draws), options.alpha, options.seed);
  report.R = options.R;
  return report;
}

}  // namespace mosaic
