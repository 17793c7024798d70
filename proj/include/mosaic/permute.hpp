#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "mosaic/residuals.hpp"

namespace mosaic {

/// Within-tile row orders for replicates 0..R. Replicate 0 is the identity.
/// Orders of one replicate are stored back to back, tile by tile.
class PermutationSet {
 public:
  PermutationSet() = default;
  PermutationSet(std::vector<std::size_t> tile_sizes, std::size_t R);

  [[nodiscard]] std::size_t R() const noexcept { return R_; }
  [[nodiscard]] std::size_t tiles() const noexcept { return sizes_.size(); }
  /// order(r, m)[i] = row of the original block placed at position i.
  [[nodiscard]] std::span<const std::uint32_t> order(std::size_t r, std::size_t m) const;
  [[nodiscard]] std::span<std::uint32_t> order(std::size_t r, std::size_t m);

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::size_t stride_ = 0;
  std::size_t R_ = 0;
  std::vector<std::uint32_t> data_;
};

/// Order (r, m) is drawn from a stream keyed on (seed, r, m) only, so any
/// replicate can be regenerated without the others.
[[nodiscard]] PermutationSet sample_permutations(const Tiling& tiling, std::size_t R, std::uint64_t seed);

/// Uniform order of one tile for replicate r >= 1.
[[nodiscard]] std::vector<std::uint32_t> replicate_order(std::size_t n, std::uint64_t seed, std::size_t r,
                                                         std::size_t m);

/// Residual panel with each block's rows reordered by replicate r.
[[nodiscard]] ResidualPanel permuted_view(const MosaicResiduals& mosaic, const PermutationSet& perms, std::size_t r);

/// (1 + #{draws >= observed}) / (R + 1).
[[nodiscard]] double pvalue(double observed, std::span<const double> null_draws);

/// max(0, Phi^-1(1 - p)).
[[nodiscard]] double exact_z(double p);

/// (observed - mean) / sd over all R + 1 values, population sd; 0 if sd = 0.
[[nodiscard]] double approx_z(double observed, std::span<const double> null_draws);

/// The same standardization applied to every one of the R + 1 values
/// (values[0] is the observed one).
[[nodiscard]] std::vector<double> approx_z_all(std::span<const double> values);

/// Smallest t such that observed > t rejects exactly when p <= alpha: the
/// floor(alpha (R + 1))-th largest draw, or +inf when that rank is 0.
[[nodiscard]] double permutation_threshold(std::span<const double> null_draws, double alpha);

/// Meta statistic over a d x (R+1) table of statistic values. `order`
/// relabels the columns: order[0] is treated as the observed column and the
/// remaining entries as the null replicates.
using MetaStatistic = std::function<double(const Matrix& stats, std::span<const std::size_t> order)>;

/// max over rows i of (S_i,obs - mean of the others) / sd of the others,
/// population sd; rows with sd = 0 contribute 0.
[[nodiscard]] MetaStatistic max_standardized_meta();

struct AdaptiveResult {
  double observed = 0.0;
  std::vector<double> draws;  // K meta values under column relabelings
  double p_value = 1.0;
};

/// Second permutation layer: K uniform relabelings of the R + 1 columns.
[[nodiscard]] AdaptiveResult adaptive_test(const Matrix& stats, const MetaStatistic& meta, std::size_t K,
                                           std::uint64_t seed);
[[nodiscard]] double adaptive_pvalue(const Matrix& stats, const MetaStatistic& meta, std::size_t K,
                                     std::uint64_t seed);

struct StatReport {
  double observed = 0.0;
  std::vector<double> null_draws;
  double p_value = 1.0;
  double z_exact = 0.0;
  double z_approx = 0.0;
  double threshold = 0.0;
  std::size_t R = 0;
  std::uint64_t seed = 0;
  std::optional<double> bonferroni_p;
  std::string label;  // e.g. window end date
};

/// Builds the report from the observed value and the null draws.
[[nodiscard]] StatReport make_report(double observed, std::vector<double> null_draws, double alpha,
                                     std::uint64_t seed);

/// Adds the Bonferroni-adjusted p-value min(1, divisor * p).
void apply_bonferroni(StatReport& report, double divisor);

nlohmann::json report_to_json(const StatReport& report);

struct InferenceOptions {
  std::size_t R = 1000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  double alpha = 0.05;
  std::size_t K = 1000;  // adaptive layer
};

/// Statistic values for replicates 0..R (index 0 = observed).
[[nodiscard]] std::vector<double> evaluate_replicates(const MosaicResiduals& mosaic, const PermutationSet& perms,
                                                      const StatisticFn& statistic, unsigned threads = 1);

/// d x (R+1) table for a vector-valued statistic.
[[nodiscard]] Matrix evaluate_replicates(const MosaicResiduals& mosaic, const PermutationSet& perms,
                                         const MultiStatisticFn& statistic, unsigned threads = 1);

/// Full mosaic permutation test of a scalar statistic.
[[nodiscard]] StatReport mosaic_test(const MosaicResiduals& mosaic, const StatisticFn& statistic,
                                     const InferenceOptions& options);

/// Mosaic test of a statistic family combined through the adaptive layer.
[[nodiscard]] StatReport adaptive_mosaic_test(const MosaicResiduals& mosaic, const MultiStatisticFn& family,
                                              const MetaStatistic& meta, const InferenceOptions& options);

}  // namespace mosaic
