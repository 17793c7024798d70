#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mosaic/panel.hpp"
#include "mosaic/permute.hpp"

namespace mosaic {

struct Distribution {
  enum class Kind { kGaussian, kStudentT };
  Kind kind = Kind::kStudentT;
  double nu = 4.0;
};

struct SimConfig {
  std::size_t T = 50;
  std::size_t p = 100;
  std::size_t k = 10;
  std::string exposure_source = "random-gaussian";  // or "file"
  std::optional<Matrix> exposure_matrix;            // p x k, used with "file"
  Distribution factor_dist;
  Distribution noise_dist;
  double rho = 0.0;
  double s0 = 0.1;
  std::uint64_t seed = 0;
  // Seed of the random exposures; defaults to `seed`. Studies fix it so that
  // every replicate shares one exposure matrix.
  std::optional<std::uint64_t> exposure_seed;
  // Equal-length exposure segments, each with freshly drawn exposures.
  std::size_t exposure_segments = 1;
  // Fraction of assets (rounded up) that are absent for one random segment.
  double missing_asset_fraction = 0.0;
};

struct SimTruth {
  Vector v;  // planted loading
  Vector Z;  // planted factor series
  bool null_holds = true;
  std::vector<std::size_t> missing_assets;
};

struct SimData {
  ReturnsPanel panel;
  ExposureSeries exposures;
  SimTruth truth;
};

/// Throws ArgumentError when the fields are inconsistent.
void validate(const SimConfig& config);

/// Y_t = L_t X_t + gamma_t + Z_t v with i.i.d. draws from the configured laws.
[[nodiscard]] SimData gen_semisynthetic(const SimConfig& config);

/// Fields missing from `j` keep their values from `defaults`.
[[nodiscard]] SimConfig sim_config_from_json(const nlohmann::json& j, const SimConfig& defaults = {});
nlohmann::json sim_config_to_json(const SimConfig& config);

/// FNV-1a hash of the canonical JSON dump, as 16 hex digits.
[[nodiscard]] std::string config_hash(const SimConfig& config);

struct StudyRow {
  std::string config_hash;
  std::string method;
  double rho = 0.0;
  double s0 = 0.0;
  std::size_t reps = 0;
  double rejection_rate = 0.0;
  double stderr_ = 0.0;
};

struct ReplicateRow {
  std::string method;
  std::size_t replicate = 0;
  double p_or_z = 0.0;
};

struct StudyResult {
  std::vector<StudyRow> rows;
  std::vector<ReplicateRow> replicates;
};

struct FprOptions {
  std::vector<std::string> methods{"mosaic", "naive_perm", "naive_bootstrap"};
  std::size_t reps = 100;
  double alpha = 0.05;
  std::size_t R = 99;
  std::size_t B = 100;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Level study on null configurations with the MMC statistic. Each replicate
/// draws its data from a seed derived from (seed, config index, replicate),
/// shared by all methods.
[[nodiscard]] StudyResult fpr_study(const std::vector<SimConfig>& configs, const FprOptions& options);

struct PowerOptions {
  std::vector<double> rhos{0.0, 1.0, 2.0, 3.0};
  std::vector<double> s0s{0.05, 0.5};
  std::vector<double> gammas;  // empty: default_gammas()
  std::size_t reps = 200;
  std::size_t R = 99;
  std::size_t K = 200;
  std::size_t null_reps = 500;  // simulated nulls for the OLS double oracle
  double alpha = 0.05;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Power of adaptive QMC, the per-cell best single-gamma QMC and the OLS
/// double oracle. Replicate r uses the same random draws in every cell.
[[nodiscard]] StudyResult power_study(const SimConfig& base, const PowerOptions& options);

void write_study_csv(std::ostream& out, const std::vector<StudyRow>& rows);
void write_replicates_csv(std::ostream& out, const std::vector<ReplicateRow>& rows);
void write_rolling_csv(std::ostream& out, const std::vector<StatReport>& reports);

}  // namespace mosaic
