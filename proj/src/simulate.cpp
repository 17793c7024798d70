#include "mosaic/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>

#include "mosaic/baselines.hpp"
#include "mosaic/errors.hpp"
#include "mosaic/parallel.hpp"
#include "mosaic/random.hpp"
#include "mosaic/residuals.hpp"
#include "mosaic/stats.hpp"
#include "mosaic/tiling.hpp"

#include <boost/math/distributions/normal.hpp>

namespace mosaic {

namespace {

constexpr const char* kModule = "simulate";

double draw(const Distribution& dist, rng::Engine& eng) {
  if (dist.kind == Distribution::Kind::kGaussian) return std::normal_distribution<double>()(eng);
  return std::student_t_distribution<double>(dist.nu)(eng);
}

std::string dist_to_string(const Distribution& dist) {
  if (dist.kind == Distribution::Kind::kGaussian) return "gaussian";
  return "student-t(" + format_double(dist.nu) + ")";
}

Distribution dist_from_json(const nlohmann::json& j) {
  Distribution dist;
  if (j.is_object()) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "gaussian") {
      dist.kind = Distribution::Kind::kGaussian;
    } else if (kind == "student-t") {
      dist.kind = Distribution::Kind::kStudentT;
      if (j.contains("nu")) dist.nu = j.at("nu").get<double>();
    } else {
      throw ArgumentError(kModule, "unknown distribution '" + kind + "'");
    }
    return dist;
  }
  const auto text = j.get<std::string>();
  if (text == "gaussian") {
    dist.kind = Distribution::Kind::kGaussian;
  } else if (text == "student-t") {
    dist.kind = Distribution::Kind::kStudentT;
  } else if (text.rfind("student-t(", 0) == 0 && text.back() == ')') {
    dist.kind = Distribution::Kind::kStudentT;
    try {
      dist.nu = std::stod(text.substr(10, text.size() - 11));
    } catch (const std::exception&) {
      throw ArgumentError(kModule, "bad degrees of freedom in '" + text + "'");
    }
  } else {
    throw ArgumentError(kModule, "unknown distribution '" + text + "'");
  }
  return dist;
}

double binomial_stderr(double rate, std::size_t reps) {
  return reps == 0 ? 0.0 : std::sqrt(rate * (1.0 - rate) / static_cast<double>(reps));
}

std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string gamma_label(double g) {
  std::string s = format_double(g);
  return s;
}

const AvailabilitySummary* availability_for(const SimData& data, std::optional<AvailabilitySummary>& storage) {
  if (data.panel.complete()) return nullptr;
  storage = summarize_availability(data.panel, data.exposures);
  return &*storage;
}

}  // namespace

void validate(const SimConfig& config) {
  if (config.T < 2 || config.p < 2) throw ArgumentError(kModule, "need T >= 2 and p >= 2");
  if (!(config.rho >= 0.0) || !std::isfinite(config.rho)) throw ArgumentError(kModule, "rho must be finite and >= 0");
  if (!(config.s0 > 0.0 && config.s0 <= 1.0)) throw ArgumentError(kModule, "s0 must lie in (0, 1]");
  for (const Distribution* d : {&config.factor_dist, &config.noise_dist}) {
    if (d->kind == Distribution::Kind::kStudentT && !(d->nu > 2.0)) {
      throw ArgumentError(kModule, "student-t degrees of freedom must exceed 2");
    }
  }
  if (config.exposure_source != "random-gaussian" && config.exposure_source != "file") {
    throw ArgumentError(kModule, "exposure_source must be 'random-gaussian' or 'file'");
  }
  if (config.exposure_source == "file") {
    if (!config.exposure_matrix) throw ArgumentError(kModule, "file exposure source without an exposure matrix");
    if (static_cast<std::size_t>(config.exposure_matrix->rows()) != config.p ||
        static_cast<std::size_t>(config.exposure_matrix->cols()) != config.k) {
      throw ArgumentError(kModule, "exposure matrix is " + std::to_string(config.exposure_matrix->rows()) + "x" +
                                       std::to_string(config.exposure_matrix->cols()) + ", expected " +
                                       std::to_string(config.p) + "x" + std::to_string(config.k));
    }
  }
  if (config.exposure_segments < 1 || config.exposure_segments > config.T) {
    throw ArgumentError(kModule, "exposure_segments must lie in [1, T]");
  }
  if (!(config.missing_asset_fraction >= 0.0 && config.missing_asset_fraction <= 1.0)) {
    throw ArgumentError(kModule, "missing_asset_fraction must lie in [0, 1]");
  }
}

SimData gen_semisynthetic(const SimConfig& config) {
  validate(config);
  const auto T = static_cast<Eigen::Index>(config.T);
  const auto p = static_cast<Eigen::Index>(config.p);
  const auto k = static_cast<Eigen::Index>(config.k);
  const std::size_t S = config.exposure_segments;

  std::vector<std::size_t> change_points;
  for (std::size_t s = 0; s < S; ++s) change_points.push_back(s * config.T / S);
  std::vector<Matrix> matrices;
  const std::uint64_t exposure_seed = config.exposure_seed.value_or(config.seed);
  for (std::size_t s = 0; s < S; ++s) {
    if (config.exposure_source == "file") {
      matrices.push_back(*config.exposure_matrix);
      continue;
    }
    auto eng = rng::engine(exposure_seed, {rng::stream::kSimulation, 0, s});
    std::normal_distribution<double> normal;
    Matrix L(p, k);
    for (Eigen::Index j = 0; j < p; ++j) {
      for (Eigen::Index f = 0; f < k; ++f) L(j, f) = normal(eng);
    }
    matrices.push_back(std::move(L));
  }
  ExposureSeries exposures;
  exposures.T = config.T;
  for (std::size_t f = 0; f < config.k; ++f) exposures.factor_ids.push_back("F" + std::to_string(f));
  if (config.exposure_source == "file") {
    exposures.change_points = {0};
    exposures.matrices = {matrices.front()};
  } else {
    exposures.change_points = change_points;
    exposures.matrices = std::move(matrices);
  }

  auto eng = rng::engine(config.seed, {rng::stream::kSimulation, 1});
  Matrix X(T, k);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index f = 0; f < k; ++f) X(t, f) = draw(config.factor_dist, eng);
  }
  Matrix gamma(T, p);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index j = 0; j < p; ++j) gamma(t, j) = draw(config.noise_dist, eng);
  }
  SimTruth truth;
  truth.Z = Vector(T);
  for (Eigen::Index t = 0; t < T; ++t) truth.Z(t) = draw(config.factor_dist, eng);

  truth.v = Vector::Zero(p);
  truth.null_holds = config.rho == 0.0;
  if (!truth.null_holds) {
    auto support_eng = rng::engine(config.seed, {rng::stream::kSimulation, 2});
    std::vector<std::size_t> order(config.p);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng::shuffle(std::span<std::size_t>(order), support_eng);
    const auto count = static_cast<std::size_t>(std::ceil(config.s0 * static_cast<double>(config.p) - 1e-9));
    const double value = config.rho / std::sqrt(static_cast<double>(count));
    for (std::size_t i = 0; i < count; ++i) truth.v(static_cast<Eigen::Index>(order[i])) = value;
  }

  Matrix Y = gamma + truth.Z * truth.v.transpose();
  for (Eigen::Index t = 0; t < T; ++t) {
    Y.row(t) += (exposures.at(static_cast<std::size_t>(t)) * X.row(t).transpose()).transpose();
  }

  SimData data;
  data.panel = make_complete_panel(Y);
  data.exposures = std::move(exposures);
  if (config.missing_asset_fraction > 0.0) {
    auto miss_eng = rng::engine(config.seed, {rng::stream::kSimulation, 3});
    std::vector<std::size_t> order(config.p);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng::shuffle(std::span<std::size_t>(order), miss_eng);
    const auto count = static_cast<std::size_t>(
        std::ceil(config.missing_asset_fraction * static_cast<double>(config.p) - 1e-9));
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = order[i];
      const std::size_t s = rng::uniform_index(miss_eng, data.exposures.segments());
      const auto [begin, end] = data.exposures.segment_range(s);
      for (std::size_t t = begin; t < end; ++t) {
        data.panel.available(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = false;
        data.panel.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = 0.0;
      }
      truth.missing_assets.push_back(j);
    }
    std::sort(truth.missing_assets.begin(), truth.missing_assets.end());
  }
  data.truth = std::move(truth);
  return data;
}

SimConfig sim_config_from_json(const nlohmann::json& j, const SimConfig& defaults) {
  SimConfig c = defaults;
  try {
    if (j.contains("T")) c.T = j.at("T").get<std::size_t>();
    if (j.contains("p")) c.p = j.at("p").get<std::size_t>();
    if (j.contains("k")) c.k = j.at("k").get<std::size_t>();
    if (j.contains("exposure_source")) c.exposure_source = j.at("exposure_source").get<std::string>();
    if (j.contains("factor_dist")) c.factor_dist = dist_from_json(j.at("factor_dist"));
    if (j.contains("noise_dist")) c.noise_dist = dist_from_json(j.at("noise_dist"));
    if (j.contains("rho")) c.rho = j.at("rho").get<double>();
    if (j.contains("s0")) c.s0 = j.at("s0").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("exposure_seed") && !j.at("exposure_seed").is_null()) {
      c.exposure_seed = j.at("exposure_seed").get<std::uint64_t>();
    }
    if (j.contains("exposure_segments")) c.exposure_segments = j.at("exposure_segments").get<std::size_t>();
    if (j.contains("missing_asset_fraction")) c.missing_asset_fraction = j.at("missing_asset_fraction").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(kModule, std::string("malformed simulation config: ") + e.what());
  }
  return c;
}

nlohmann::json sim_config_to_json(const SimConfig& c) {
  nlohmann::json j = {{"T", c.T},
                      {"p", c.p},
                      {"k", c.k},
                      {"exposure_source", c.exposure_source},
                      {"factor_dist", dist_to_string(c.factor_dist)},
                      {"noise_dist", dist_to_string(c.noise_dist)},
                      {"rho", c.rho},
                      {"s0", c.s0},
                      {"seed", c.seed},
                      {"exposure_segments", c.exposure_segments},
                      {"missing_asset_fraction", c.missing_asset_fraction}};
  j["exposure_seed"] = c.exposure_seed ? nlohmann::json(*c.exposure_seed) : nlohmann::json(nullptr);
  return j;
}

std::string config_hash(const SimConfig& config) {
  const std::string text = sim_config_to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

StudyResult fpr_study(const std::vector<SimConfig>& configs, const FprOptions& options) {
  for (const auto& m : options.methods) {
    if (m != "mosaic" && m != "naive_perm" && m != "naive_bootstrap") {
      throw ArgumentError(kModule, "unknown method '" + m + "'");
    }
  }
  if (options.reps < 1) throw ArgumentError(kModule, "need at least one replicate");
  const Statistic stat = mmc_statistic();
  const double z_crit = boost::math::quantile(boost::math::complement(boost::math::normal_distribution<double>(),
                                                                      options.alpha / 2.0));
  StudyResult result;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    validate(configs[c]);
    if (configs[c].rho != 0.0) throw ArgumentError(kModule, "level studies need null configurations (rho = 0)");
    const std::size_t M = options.methods.size();
    std::vector<double> values(options.reps * M);
    std::vector<char> rejected(options.reps * M, 0);
    parallel_for(options.reps, options.threads, [&](std::size_t r) {
      SimConfig cfg = configs[c];
      cfg.seed = rng::derive_seed(options.seed, {rng::stream::kReplicate, c, r});
      const SimData data = gen_semisynthetic(cfg);
      for (std::size_t mi = 0; mi < M; ++mi) {
        const std::string& method = options.methods[mi];
        double value = 0.0;
        bool reject = false;
        if (method == "mosaic") {
          std::optional<AvailabilitySummary> storage;
          const Tiling tiling = default_tiling(cfg.T, cfg.p, cfg.k, data.exposures.change_points,
                                               availability_for(data, storage), cfg.seed);
          const MosaicResiduals mosaic = mosaic_residuals(data.panel, data.exposures, tiling);
          InferenceOptions inf;
          inf.R = options.R;
          inf.alpha = options.alpha;
          inf.seed = rng::derive_seed(cfg.seed, {rng::stream::kPermutation});
          value = mosaic_test(mosaic, stat.evaluate, inf).p_value;
          reject = value <= options.alpha;
        } else if (method == "naive_perm") {
          const ResidualPanel ols = ols_residuals(data.panel, data.exposures);
          value = naive_perm_test(ols, stat.evaluate, options.R, cfg.seed);
          reject = value <= options.alpha;
        } else {
          const ResidualPanel ols = ols_residuals(data.panel, data.exposures);
          value = naive_bootstrap_z(ols, stat, options.B, cfg.seed).z_bs;
          reject = std::abs(value) >= z_crit;
        }
        values[r * M + mi] = value;
        rejected[r * M + mi] = reject ? 1 : 0;
      }
    });
    const std::string hash = config_hash(configs[c]);
    for (std::size_t mi = 0; mi < M; ++mi) {
      std::size_t count = 0;
      for (std::size_t r = 0; r < options.reps; ++r) {
        count += static_cast<std::size_t>(rejected[r * M + mi]);
        result.replicates.push_back({options.methods[mi], r, values[r * M + mi]});
      }
      const double rate = static_cast<double>(count) / static_cast<double>(options.reps);
      result.rows.push_back({hash, options.methods[mi], configs[c].rho, configs[c].s0, options.reps, rate,
                             binomial_stderr(rate, options.reps)});
    }
  }
  return result;
}

StudyResult power_study(const SimConfig& base, const PowerOptions& options) {
  validate(base);
  if (options.reps < 1) throw ArgumentError(kModule, "need at least one replicate");
  const std::vector<double> gammas = options.gammas.empty() ? default_gammas() : options.gammas;
  const std::size_t G = gammas.size();
  const auto family = qmc_family_statistic(gammas);
  const auto meta = max_standardized_meta();
  SimConfig fixed_base = base;
  if (!fixed_base.exposure_seed) fixed_base.exposure_seed = rng::derive_seed(options.seed, {rng::stream::kSimulation});

  // Null distribution of the OLS statistics, simulated with the same exposures.
  Matrix ols_null(static_cast<Eigen::Index>(G), static_cast<Eigen::Index>(options.null_reps));
  parallel_for(options.null_reps, options.threads, [&](std::size_t i) {
    SimConfig cfg = fixed_base;
    cfg.rho = 0.0;
    cfg.seed = rng::derive_seed(options.seed, {rng::stream::kReplicate, 1, i});
    const SimData data = gen_semisynthetic(cfg);
    const auto values = family(ols_residuals(data.panel, data.exposures));
    for (std::size_t g = 0; g < G; ++g) ols_null(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(i)) = values[g];
  });

  struct Cell {
    double rho;
    double s0;
  };
  std::vector<Cell> cells;
  for (double s0 : options.s0s) {
    for (double rho : options.rhos) cells.push_back({rho, s0});
  }
  // Per replicate and cell: adaptive p, G mosaic p-values, G OLS p-values.
  const std::size_t width = 1 + 2 * G;
  std::vector<double> pvals(options.reps * cells.size() * width);
  parallel_for(options.reps, options.threads, [&](std::size_t r) {
    const std::uint64_t rep_seed = rng::derive_seed(options.seed, {rng::stream::kReplicate, 0, r});
    for (std::size_t c = 0; c < cells.size(); ++c) {
      SimConfig cfg = fixed_base;
      cfg.rho = cells[c].rho;
      cfg.s0 = cells[c].s0;
      cfg.seed = rep_seed;
      const SimData data = gen_semisynthetic(cfg);
      std::optional<AvailabilitySummary> storage;
      const Tiling tiling = default_tiling(cfg.T, cfg.p, cfg.k, data.exposures.change_points,
                                           availability_for(data, storage), rep_seed);
      const MosaicResiduals mosaic = mosaic_residuals(data.panel, data.exposures, tiling);
      const auto perms = sample_permutations(tiling, options.R, rng::derive_seed(rep_seed, {rng::stream::kPermutation}));
      const Matrix table = evaluate_replicates(mosaic, perms, family);
      double* out = &pvals[(r * cells.size() + c) * width];
      out[0] = adaptive_pvalue(table, meta, options.K, rng::derive_seed(rep_seed, {rng::stream::kMeta}));
      for (std::size_t g = 0; g < G; ++g) {
        const Vector row = table.row(static_cast<Eigen::Index>(g));
        out[1 + g] = pvalue(row(0), std::span<const double>(row.data() + 1, static_cast<std::size_t>(row.size() - 1)));
      }
      const auto observed = family(ols_residuals(data.panel, data.exposures));
      for (std::size_t g = 0; g < G; ++g) {
        const Vector null_row = ols_null.row(static_cast<Eigen::Index>(g));
        out[1 + G + g] = options.null_reps == 0
                             ? 1.0
                             : pvalue(observed[g], std::span<const double>(null_row.data(), options.null_reps));
      }
    }
  });

  StudyResult result;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    SimConfig cfg = fixed_base;
    cfg.rho = cells[c].rho;
    cfg.s0 = cells[c].s0;
    cfg.seed = options.seed;
    const std::string hash = config_hash(cfg);
    const std::string cell_tag = "@rho=" + format_double(cells[c].rho) + ";s0=" + format_double(cells[c].s0);
    std::vector<double> rates(width, 0.0);
    for (std::size_t r = 0; r < options.reps; ++r) {
      const double* row = &pvals[(r * cells.size() + c) * width];
      for (std::size_t i = 0; i < width; ++i) rates[i] += row[i] <= options.alpha ? 1.0 : 0.0;
    }
    for (double& rate : rates) rate /= static_cast<double>(options.reps);
    auto add = [&](const std::string& method, double rate) {
      result.rows.push_back({hash, method, cells[c].rho, cells[c].s0, options.reps, rate,
                             binomial_stderr(rate, options.reps)});
    };
    add("mosaic_adaptive_qmc", rates[0]);
    add("mosaic_oracle_qmc", *std::max_element(rates.begin() + 1, rates.begin() + 1 + static_cast<std::ptrdiff_t>(G)));
    add("ols_double_oracle_qmc",
        *std::max_element(rates.begin() + 1 + static_cast<std::ptrdiff_t>(G), rates.end()));
    for (std::size_t g = 0; g < G; ++g) add("mosaic_qmc_g" + gamma_label(gammas[g]), rates[1 + g]);
    for (std::size_t g = 0; g < G; ++g) add("ols_qmc_g" + gamma_label(gammas[g]), rates[1 + G + g]);
    for (std::size_t r = 0; r < options.reps; ++r) {
      const double* row = &pvals[(r * cells.size() + c) * width];
      result.replicates.push_back({"mosaic_adaptive_qmc" + cell_tag, r, row[0]});
      for (std::size_t g = 0; g < G; ++g) {
        result.replicates.push_back({"mosaic_qmc_g" + gamma_label(gammas[g]) + cell_tag, r, row[1 + g]});
        result.replicates.push_back({"ols_qmc_g" + gamma_label(gammas[g]) + cell_tag, r, row[1 + G + g]});
      }
    }
  }
  return result;
}

void write_study_csv(std::ostream& out, const std::vector<StudyRow>& rows) {
  out << "config_hash,method,rho,s0,reps,rejection_rate,stderr\n";
  for (const auto& row : rows) {
    out << row.config_hash << ',' << row.method << ',' << format_double(row.rho) << ',' << format_double(row.s0)
        << ',' << row.reps << ',' << fixed(row.rejection_rate, 6) << ',' << fixed(row.stderr_, 6) << '\n';
  }
}

void write_replicates_csv(std::ostream& out, const std::vector<ReplicateRow>& rows) {
  out << "method,replicate,p_or_z\n";
  for (const auto& row : rows) out << row.method << ',' << row.replicate << ',' << format_double(row.p_or_z) << '\n';
}

void write_rolling_csv(std::ostream& out, const std::vector<StatReport>& reports) {
  out << "window_end,observed,threshold,p_value,z_exact,z_approx\n";
  for (const auto& r : reports) {
    out << r.label << ',' << format_double(r.observed) << ',' << format_double(r.threshold) << ','
        << format_double(r.p_value) << ',' << format_double(r.z_exact) << ',' << format_double(r.z_approx) << '\n';
  }
}

}  // namespace mosaic
