#include "mosaic/cli.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mosaic/baselines.hpp"
#include "mosaic/errors.hpp"
#include "mosaic/panel.hpp"
#include "mosaic/permute.hpp"
#include "mosaic/residuals.hpp"
#include "mosaic/simulate.hpp"
#include "mosaic/stats.hpp"
#include "mosaic/tiling.hpp"

namespace mosaic::cli {

namespace {

constexpr const char* kModule = "cli";
using nlohmann::json;

// Raw flag values. One instance is shared by all subcommands; only the
// options of the subcommand that ran can have a nonzero count.
struct Flags {
  std::string config;
  std::string output;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  std::string returns;
  std::string exposures;
  std::vector<std::size_t> change_points;

  std::string tiling_mode;
  std::size_t batch_size = 10;
  std::size_t groups = 0;
  bool floor_groups = false;
  bool augment = false;
  std::string tiling_out;
  std::string residuals_out;
  std::string tiling_in;

  std::string statistic;
  double gamma = 0.5;
  std::vector<double> gammas;
  std::size_t R = 1000;
  std::size_t K = 1000;
  double alpha = 0.05;
  double bonferroni = 1.0;

  std::size_t window = 0;
  std::size_t stride = 0;
  std::string split_date;
  std::size_t split_index = 0;
  std::vector<std::size_t> sparsities;

  std::size_t T = 0;
  std::size_t p = 0;
  std::size_t k = 0;
  double rho = 0.0;
  double s0 = 0.1;
  std::string factor_dist;
  std::string noise_dist;
  std::string exposure_file;
  std::uint64_t exposure_seed = 0;
  std::size_t exposure_segments = 1;
  double missing_fraction = 0.0;
  std::vector<std::string> methods;
  std::size_t reps = 100;
  std::size_t B = 100;
  std::vector<double> rhos;
  std::vector<double> s0s;
  std::size_t null_reps = 500;
  std::string replicates_out;
  std::string emit_returns;
  std::string emit_exposures;
};

class Options {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& flag, T& target, const std::string& help) {
    CLI::Option* opt = app->add_option(flag, target, help);
    registry_[key_of(flag)].push_back(opt);
    return opt;
  }

  CLI::Option* add_flag(CLI::App* app, const std::string& flag, bool& target, const std::string& help) {
    CLI::Option* opt = app->add_flag(flag, target, help);
    registry_[key_of(flag)].push_back(opt);
    return opt;
  }

  [[nodiscard]] bool given(const std::string& key) const {
    const auto it = registry_.find(key);
    if (it == registry_.end()) return false;
    for (const CLI::Option* opt : it->second) {
      if (opt->count() > 0) return true;
    }
    return false;
  }

 private:
  static std::string key_of(std::string flag) {
    flag = flag.substr(0, flag.find(','));
    while (!flag.empty() && flag.front() == '-') flag.erase(flag.begin());
    for (char& c : flag) {
      if (c == '-') c = '_';
    }
    return flag;
  }

  std::map<std::string, std::vector<CLI::Option*>> registry_;
};

// Flag value if given, else the config file entry, else the fallback.
class Resolver {
 public:
  Resolver(const Options& options, json config) : options_(options), config_(std::move(config)) {}

  template <class T>
  T get(const std::string& key, const T& flag_value, const T& fallback) const {
    if (options_.given(key)) return flag_value;
    if (config_.contains(key) && !config_.at(key).is_null()) {
      try {
        return config_.at(key).get<T>();
      } catch (const json::exception& e) {
        throw ArgumentError(kModule, "config entry '" + key + "': " + e.what());
      }
    }
    return fallback;
  }

  [[nodiscard]] bool has(const std::string& key) const {
    return options_.given(key) || (config_.contains(key) && !config_.at(key).is_null());
  }

  [[nodiscard]] bool flag_given(const std::string& key) const { return options_.given(key); }
  [[nodiscard]] const json& config() const noexcept { return config_; }

 private:
  const Options& options_;
  json config_;
};

std::ifstream open_input(const std::string& path, const std::string& what) {
  if (path.empty()) throw ArgumentError(kModule, "missing --" + what + " path");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError(kModule, "cannot open " + what + " file '" + path + "'");
  return in;
}

json read_json_file(const std::string& path) {
  auto in = open_input(path, "config");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ArgumentError(kModule, "config file '" + path + "' is not valid JSON: " + e.what());
  }
}

std::uint64_t default_seed() {
  const char* env = std::getenv("MOSAIC_SEED");
  if (env == nullptr || *env == '\0') return 0;
  std::uint64_t value = 0;
  const char* end = env + std::char_traits<char>::length(env);
  const auto [ptr, ec] = std::from_chars(env, end, value);
  if (ec != std::errc() || ptr != end) throw ArgumentError(kModule, "MOSAIC_SEED must be a non-negative integer");
  return value;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError(kModule, "cannot write '" + path + "'");
  out << text;
  if (!out) throw ArgumentError(kModule, "failed writing '" + path + "'");
}

struct Inputs {
  ReturnsPanel panel;
  ExposureSeries exposures;
};

Inputs load_inputs(const Resolver& r, const Flags& f) {
  Inputs in;
  auto returns = open_input(r.get<std::string>("returns", f.returns, ""), "returns");
  in.panel = load_returns(returns);
  auto exposures = open_input(r.get<std::string>("exposures", f.exposures, ""), "exposures");
  in.exposures = load_exposures(exposures, in.panel);
  return in;
}

TilingConfig tiling_config(const Resolver& r, const Flags& f) {
  TilingConfig config;
  json section = r.config().contains("tiling") ? r.config().at("tiling") : json::object();
  auto pick = [&](const std::string& key, const std::string& json_key, auto flag_value, auto fallback) {
    using T = decltype(fallback);
    if (r.has(key)) return r.get<T>(key, flag_value, fallback);
    if (section.contains(json_key)) {
      try {
        return section.at(json_key).get<T>();
      } catch (const json::exception& e) {
        throw ArgumentError(kModule, "config entry 'tiling." + json_key + "': " + e.what());
      }
    }
    return fallback;
  };
  config.mode = pick("tiling_mode", "mode", f.tiling_mode, std::string("default"));
  config.options.batch_size = pick("batch_size", "batch_size", f.batch_size, std::size_t{10});
  const std::size_t groups = pick("groups", "groups", f.groups, std::size_t{0});
  if (groups > 0) config.options.groups = groups;
  config.options.rounding = pick("floor_groups", "floor_groups", f.floor_groups, false) ? GroupRounding::kFloor
                                                                                      : GroupRounding::kCeil;
  config.augment = pick("augment", "augment", f.augment, false);
  config.extra_change_points = pick("change_points", "change_points", f.change_points, std::vector<std::size_t>{});
  if (config.mode != "default" && config.mode != "adaptive") {
    throw ArgumentError(kModule, "tiling mode must be 'default' or 'adaptive'");
  }
  return config;
}

StatisticConfig statistic_config(const Resolver& r, const Flags& f) {
  StatisticConfig config;
  if (r.config().contains("statistic")) {
    const json& s = r.config().at("statistic");
    config = s.is_string() ? statistic_config_from_json(json{{"type", s}}) : statistic_config_from_json(s);
  }
  if (r.flag_given("statistic")) config.type = f.statistic;
  config.gamma = r.get<double>("gamma", f.gamma, config.gamma);
  config.gammas = r.get<std::vector<double>>("gammas", f.gammas, config.gammas);
  // Round trip through the JSON reader for its validation.
  return statistic_config_from_json(statistic_config_to_json(config));
}

InferenceOptions inference_options(const Resolver& r, const Flags& f, std::uint64_t seed, unsigned threads) {
  InferenceOptions options;
  options.R = r.get<std::size_t>("R", f.R, 1000);
  options.K = r.get<std::size_t>("K", f.K, 1000);
  options.alpha = r.get<double>("alpha", f.alpha, 0.05);
  options.seed = seed;
  options.threads = threads;
  if (options.R < 1) throw ArgumentError(kModule, "R must be at least 1");
  if (options.K < 1) throw ArgumentError(kModule, "K must be at least 1");
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw ArgumentError(kModule, "alpha must lie in (0, 1)");
  return options;
}

Matrix read_exposure_matrix(const std::string& path) {
  auto in = open_input(path, "exposure");
  std::string line;
  std::getline(in, line);
  std::string first_date;
  std::map<std::string, std::map<std::string, double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 4) throw ParseError(kModule, lineno, "expected 4 fields");
    if (first_date.empty()) first_date = fields[0];
    if (fields[0] != first_date) continue;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(), value);
    if (ec != std::errc() || ptr != fields[3].data() + fields[3].size()) {
      throw ParseError(kModule, lineno, "non-numeric exposure '" + fields[3] + "'");
    }
    rows[fields[1]][fields[2]] = value;
  }
  if (rows.empty()) throw ArgumentError(kModule, "exposure file '" + path + "' has no rows");
  const auto& factors = rows.begin()->second;
  Matrix L(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(factors.size()));
  Eigen::Index i = 0;
  for (const auto& [asset, values] : rows) {
    if (values.size() != factors.size()) throw CoverageError(kModule, "asset '" + asset + "' lacks some factors");
    Eigen::Index c = 0;
    for (const auto& [factor, value] : values) {
      if (factors.find(factor) == factors.end()) throw CoverageError(kModule, "unexpected factor '" + factor + "'");
      L(i, c++) = value;
    }
    ++i;
  }
  return L;
}

// Level studies default to the Gaussian design with T=350, p=183, k=18.
SimConfig level_study_defaults() {
  SimConfig c;
  c.T = 350;
  c.p = 183;
  c.k = 18;
  c.factor_dist.kind = Distribution::Kind::kGaussian;
  c.noise_dist.kind = Distribution::Kind::kGaussian;
  return c;
}

SimConfig sim_config(const Resolver& r, const Flags& f, const SimConfig& defaults) {
  SimConfig config = r.config().contains("simulation")
                         ? sim_config_from_json(r.config().at("simulation"), defaults)
                         : defaults;
  if (r.has("T")) config.T = r.get<std::size_t>("T", f.T, config.T);
  if (r.has("p")) config.p = r.get<std::size_t>("p", f.p, config.p);
  if (r.has("k")) config.k = r.get<std::size_t>("k", f.k, config.k);
  if (r.has("rho")) config.rho = r.get<double>("rho", f.rho, config.rho);
  if (r.has("s0")) config.s0 = r.get<double>("s0", f.s0, config.s0);
  if (r.has("factor_dist")) {
    config.factor_dist = sim_config_from_json(json{{"factor_dist", r.get<std::string>("factor_dist", f.factor_dist, "")}}).factor_dist;
  }
  if (r.has("noise_dist")) {
    config.noise_dist = sim_config_from_json(json{{"noise_dist", r.get<std::string>("noise_dist", f.noise_dist, "")}}).noise_dist;
  }
  if (r.has("exposure_seed")) config.exposure_seed = r.get<std::uint64_t>("exposure_seed", f.exposure_seed, 0);
  if (r.has("exposure_segments")) {
    config.exposure_segments = r.get<std::size_t>("exposure_segments", f.exposure_segments, 1);
  }
  if (r.has("missing_fraction")) config.missing_asset_fraction = r.get<double>("missing_fraction", f.missing_fraction, 0.0);
  std::string exposure_file = r.get<std::string>("exposure_file", f.exposure_file, "");
  if (exposure_file.empty() && r.config().contains("simulation")) {
    exposure_file = r.config().at("simulation").value("exposure_file", std::string());
  }
  if (!exposure_file.empty()) {
    config.exposure_source = "file";
    config.exposure_matrix = read_exposure_matrix(exposure_file);
    if (!r.has("p")) config.p = static_cast<std::size_t>(config.exposure_matrix->rows());
    if (!r.has("k")) config.k = static_cast<std::size_t>(config.exposure_matrix->cols());
  }
  validate(config);
  return config;
}

struct Context {
  const Flags& flags;
  const Resolver& resolver;
  std::uint64_t seed;
  unsigned threads;
  std::ostream& err;
};

json report_with_context(const StatReport& report, const StatisticConfig& statistic, const TilingConfig& tiling,
                         const Tiling& t) {
  json j = report_to_json(report);
  j["statistic"] = statistic_config_to_json(statistic);
  j["tiling_mode"] = tiling.mode;
  j["tiles"] = t.tiles.size();
  j["T"] = t.T;
  j["p"] = t.p;
  return j;
}

std::string cmd_test(const Context& ctx) {
  const Inputs in = load_inputs(ctx.resolver, ctx.flags);
  const TilingConfig tiling = tiling_config(ctx.resolver, ctx.flags);
  const StatisticConfig statistic = statistic_config(ctx.resolver, ctx.flags);
  const InferenceOptions options = inference_options(ctx.resolver, ctx.flags, ctx.seed, ctx.threads);
  const double bonferroni = ctx.resolver.get<double>("bonferroni", ctx.flags.bonferroni, 1.0);

  const ExposureSeries effective = effective_exposures(in.exposures, tiling);
  const Tiling t = build_tiling(in.panel, effective, tiling, ctx.seed);
  const TilingReport check = validate_tiling(t, effective, in.panel.available);
  if (!check.ok()) throw InvariantError(kModule, "constructed tiling failed validation: " + check.problems.front());
  const MosaicResiduals mosaic = mosaic_residuals(in.panel, effective, t, ctx.threads);
  StatReport report = run_statistic(mosaic, statistic, options);
  if (ctx.resolver.has("bonferroni")) apply_bonferroni(report, bonferroni);

  const std::string tiling_out = ctx.resolver.get<std::string>("tiling_out", ctx.flags.tiling_out, "");
  if (!tiling_out.empty()) write_text_file(tiling_out, tiling_to_json(t).dump(2) + "\n");
  const std::string residuals_out = ctx.resolver.get<std::string>("residuals_out", ctx.flags.residuals_out, "");
  if (!residuals_out.empty()) {
    std::ostringstream csv;
    write_residuals(csv, mosaic.materialize(), in.panel.times, in.panel.assets);
    write_text_file(residuals_out, csv.str());
  }
  return report_with_context(report, statistic, tiling, t).dump(2) + "\n";
}

std::string cmd_rolling(const Context& ctx) {
  const Inputs in = load_inputs(ctx.resolver, ctx.flags);
  const TilingConfig tiling = tiling_config(ctx.resolver, ctx.flags);
  const StatisticConfig statistic = statistic_config(ctx.resolver, ctx.flags);
  const InferenceOptions options = inference_options(ctx.resolver, ctx.flags, ctx.seed, ctx.threads);
  const std::size_t window = ctx.resolver.get<std::size_t>("window", ctx.flags.window, 0);
  if (window == 0) throw ArgumentError(kModule, "rolling needs --window");
  const std::size_t stride = ctx.resolver.get<std::size_t>("stride", ctx.flags.stride, window);
  const auto reports = rolling_analysis(in.panel, in.exposures, tiling, statistic, window, stride, options);
  std::ostringstream csv;
  write_rolling_csv(csv, reports);
  return csv.str();
}

std::string cmd_improve(const Context& ctx) {
  const Inputs in = load_inputs(ctx.resolver, ctx.flags);
  const TilingConfig tiling = tiling_config(ctx.resolver, ctx.flags);
  const InferenceOptions options = inference_options(ctx.resolver, ctx.flags, ctx.seed, ctx.threads);
  ImproveOptions improve;
  if (ctx.resolver.has("split_date")) {
    const std::string date = ctx.resolver.get<std::string>("split_date", ctx.flags.split_date, "");
    const auto it = std::lower_bound(in.panel.times.begin(), in.panel.times.end(), date);
    if (it == in.panel.times.begin() || it == in.panel.times.end()) {
      throw ArgumentError(kModule, "fold boundary " + date + " is outside the panel");
    }
    improve.split = static_cast<std::size_t>(it - in.panel.times.begin());
  } else if (ctx.resolver.has("split_index")) {
    improve.split = ctx.resolver.get<std::size_t>("split_index", ctx.flags.split_index, 0);
  } else {
    throw ArgumentError(kModule, "improve needs --split-date or --split-index");
  }
  if (ctx.resolver.has("window")) improve.window = ctx.resolver.get<std::size_t>("window", ctx.flags.window, 0);
  improve.stride = ctx.resolver.get<std::size_t>("stride", ctx.flags.stride, 0);
  improve.sparsities = ctx.resolver.get<std::vector<std::size_t>>("sparsities", ctx.flags.sparsities, {});

  const ImproveReport result = improvement_analysis(in.panel, in.exposures, tiling, improve, options);
  json loadings = json::array();
  for (const auto& l : result.loadings) {
    std::vector<std::string> support;
    for (std::size_t j : l.support) support.push_back(in.panel.assets[j]);
    loadings.push_back({{"sparsity", l.sparsity}, {"support", support}});
  }
  json windows = json::array();
  for (std::size_t w = 0; w < result.reports.size(); ++w) {
    json entry = report_to_json(result.reports[w]);
    entry["max_r2"] = result.bcv[w].max_r2;
    entry["r2"] = result.bcv[w].r2;
    windows.push_back(std::move(entry));
  }
  json out = {{"split_date", in.panel.times[improve.split]}, {"loadings", loadings}, {"windows", windows}};
  return out.dump(2) + "\n";
}

std::string cmd_simulate(const Context& ctx) {
  const Resolver& r = ctx.resolver;
  const SimConfig base = sim_config(r, ctx.flags, level_study_defaults());
  const std::string emit_returns = r.get<std::string>("emit_returns", ctx.flags.emit_returns, "");
  const std::string emit_exposures = r.get<std::string>("emit_exposures", ctx.flags.emit_exposures, "");
  if (!emit_returns.empty() || !emit_exposures.empty()) {
    SimConfig cfg = base;
    cfg.seed = ctx.seed;
    const SimData data = gen_semisynthetic(cfg);
    std::ostringstream returns_csv;
    std::ostringstream exposures_csv;
    write_returns(returns_csv, data.panel);
    write_exposures(exposures_csv, data.panel, data.exposures);
    if (!emit_returns.empty()) write_text_file(emit_returns, returns_csv.str());
    if (!emit_exposures.empty()) write_text_file(emit_exposures, exposures_csv.str());
    return sim_config_to_json(cfg).dump(2) + "\n";
  }
  std::vector<SimConfig> configs;
  if (r.config().contains("configs")) {
    for (const auto& c : r.config().at("configs")) {
      SimConfig cfg = sim_config_from_json(c, level_study_defaults());
      validate(cfg);
      configs.push_back(cfg);
    }
  } else {
    configs.push_back(base);
  }
  for (const auto& c : configs) {
    if (c.rho != 0.0) throw ArgumentError(kModule, "false-positive studies need rho = 0 in every configuration");
  }
  FprOptions options;
  options.methods = r.get<std::vector<std::string>>("methods", ctx.flags.methods, options.methods);
  options.reps = r.get<std::size_t>("reps", ctx.flags.reps, options.reps);
  options.R = r.get<std::size_t>("R", ctx.flags.R, 99);
  options.B = r.get<std::size_t>("B", ctx.flags.B, options.B);
  options.alpha = r.get<double>("alpha", ctx.flags.alpha, 0.05);
  options.seed = ctx.seed;
  options.threads = ctx.threads;
  for (const auto& m : options.methods) {
    if (m != "mosaic") ctx.err << "note: " << m << " is an invalid comparison baseline, not a test to rely on\n";
  }
  const StudyResult study = fpr_study(configs, options);
  const std::string replicates_out = r.get<std::string>("replicates_out", ctx.flags.replicates_out, "");
  if (!replicates_out.empty()) {
    std::ostringstream csv;
    write_replicates_csv(csv, study.replicates);
    write_text_file(replicates_out, csv.str());
  }
  std::ostringstream csv;
  write_study_csv(csv, study.rows);
  return csv.str();
}

std::string cmd_power(const Context& ctx) {
  const Resolver& r = ctx.resolver;
  const SimConfig base = sim_config(r, ctx.flags, SimConfig{});
  PowerOptions options;
  options.rhos = r.get<std::vector<double>>("rhos", ctx.flags.rhos, options.rhos);
  options.s0s = r.get<std::vector<double>>("s0s", ctx.flags.s0s, options.s0s);
  options.gammas = r.get<std::vector<double>>("gammas", ctx.flags.gammas, {});
  options.reps = r.get<std::size_t>("reps", ctx.flags.reps, options.reps);
  options.R = r.get<std::size_t>("R", ctx.flags.R, options.R);
  options.K = r.get<std::size_t>("K", ctx.flags.K, options.K);
  options.null_reps = r.get<std::size_t>("null_reps", ctx.flags.null_reps, options.null_reps);
  options.alpha = r.get<double>("alpha", ctx.flags.alpha, options.alpha);
  options.seed = ctx.seed;
  options.threads = ctx.threads;
  const StudyResult study = power_study(base, options);
  const std::string replicates_out = r.get<std::string>("replicates_out", ctx.flags.replicates_out, "");
  if (!replicates_out.empty()) {
    std::ostringstream csv;
    write_replicates_csv(csv, study.replicates);
    write_text_file(replicates_out, csv.str());
  }
  std::ostringstream csv;
  write_study_csv(csv, study.rows);
  return csv.str();
}

std::string cmd_validate_tiling(const Context& ctx, bool& failed) {
  const Inputs in = load_inputs(ctx.resolver, ctx.flags);
  const TilingConfig tiling = tiling_config(ctx.resolver, ctx.flags);
  const ExposureSeries effective = effective_exposures(in.exposures, tiling);
  auto file = open_input(ctx.resolver.get<std::string>("tiling_file", ctx.flags.tiling_in, ""), "tiling");
  json j;
  try {
    j = json::parse(file);
  } catch (const json::exception& e) {
    throw ArgumentError(kModule, std::string("tiling file is not valid JSON: ") + e.what());
  }
  const Tiling t = tiling_from_json(j);
  const TilingReport report = validate_tiling(t, effective, in.panel.available);
  failed = !report.ok();
  return report_to_json(report).dump(2) + "\n";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInput:
      return kInputError;
    case ErrorKind::kDegenerate:
      return kDegenerate;
    case ErrorKind::kInvariant:
      return kInvariantViolation;
  }
  return kInvariantViolation;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Flags f;
  Options opts;
  CLI::App app{"Mosaic permutation test for factor models with known exposures", "mosaic"};
  app.require_subcommand(1);

  auto common = [&](CLI::App* sub) {
    opts.add(sub, "--config", f.config, "JSON config file; flags override its entries");
    opts.add(sub, "--output,-o", f.output, "Write the result here instead of stdout");
    opts.add(sub, "--seed", f.seed, "Random seed (default: MOSAIC_SEED or 0)");
    opts.add(sub, "--threads", f.threads, "Worker threads; never changes results")->check(CLI::PositiveNumber);
  };
  auto data = [&](CLI::App* sub) {
    opts.add(sub, "--returns", f.returns, "Returns CSV (date,asset_id,return)");
    opts.add(sub, "--exposures", f.exposures, "Exposures CSV (date,asset_id,factor_id,value)");
    opts.add(sub, "--change-points", f.change_points, "Extra exposure change-points (row indices)");
    opts.add(sub, "--tiling-mode", f.tiling_mode, "default or adaptive");
    opts.add(sub, "--batch-size", f.batch_size, "Timepoints per batch");
    opts.add(sub, "--groups", f.groups, "Number of asset groups per batch (overrides the default rule)");
    opts.add_flag(sub, "--floor-groups", f.floor_groups, "Round p/(5k) down instead of up");
    opts.add_flag(sub, "--augment", f.augment, "Pair timepoints and augment exposures");
  };
  auto inference = [&](CLI::App* sub) {
    opts.add(sub, "--statistic", f.statistic, "mmc, qmc or adaptive_qmc");
    opts.add(sub, "--gamma", f.gamma, "Quantile level for qmc");
    opts.add(sub, "--gammas", f.gammas, "Quantile levels for adaptive_qmc");
    opts.add(sub, "--R", f.R, "Permutation replicates");
    opts.add(sub, "--K", f.K, "Relabelings in the adaptive layer");
    opts.add(sub, "--alpha", f.alpha, "Level for the reported threshold");
  };
  auto simulation = [&](CLI::App* sub) {
    opts.add(sub, "--T", f.T, "Timepoints");
    opts.add(sub, "--p", f.p, "Assets");
    opts.add(sub, "--k", f.k, "Factors");
    opts.add(sub, "--rho", f.rho, "Signal size");
    opts.add(sub, "--s0", f.s0, "Signal sparsity fraction");
    opts.add(sub, "--factor-dist", f.factor_dist, "gaussian or student-t(nu)");
    opts.add(sub, "--noise-dist", f.noise_dist, "gaussian or student-t(nu)");
    opts.add(sub, "--exposure-file", f.exposure_file, "Exposures CSV; the first date gives the p x k matrix");
    opts.add(sub, "--exposure-seed", f.exposure_seed, "Seed for the random exposures");
    opts.add(sub, "--exposure-segments", f.exposure_segments, "Number of exposure segments");
    opts.add(sub, "--missing-fraction", f.missing_fraction, "Fraction of assets absent for one segment");
    opts.add(sub, "--reps", f.reps, "Monte-Carlo replicates");
    opts.add(sub, "--replicates-out", f.replicates_out, "Per-replicate CSV (method,replicate,p_or_z)");
    opts.add(sub, "--R", f.R, "Permutation replicates");
    opts.add(sub, "--alpha", f.alpha, "Test level");
  };

  CLI::App* test = app.add_subcommand("test", "Mosaic test on the full panel (JSON report)");
  common(test);
  data(test);
  inference(test);
  opts.add(test, "--bonferroni", f.bonferroni, "Also report min(1, divisor * p)");
  opts.add(test, "--tiling-out", f.tiling_out, "Save the tiling as JSON");
  opts.add(test, "--residuals-out", f.residuals_out, "Save the mosaic residuals as CSV");

  CLI::App* rolling = app.add_subcommand("rolling", "Mosaic test in sliding windows (CSV)");
  common(rolling);
  data(rolling);
  inference(rolling);
  opts.add(rolling, "--window", f.window, "Window length");
  opts.add(rolling, "--stride", f.stride, "Step between window ends (default: window)");

  CLI::App* improve = app.add_subcommand("improve", "Bi-cross-validation test for a missing factor (JSON)");
  common(improve);
  data(improve);
  opts.add(improve, "--R", f.R, "Permutation replicates");
  opts.add(improve, "--alpha", f.alpha, "Level for the reported threshold");
  opts.add(improve, "--split-date", f.split_date, "First date of the second fold");
  opts.add(improve, "--split-index", f.split_index, "First row of the second fold");
  opts.add(improve, "--window", f.window, "Window length on the second fold");
  opts.add(improve, "--stride", f.stride, "Step between windows");
  opts.add(improve, "--sparsities", f.sparsities, "Sparsity levels (default: 10 values from 20 to p)");

  CLI::App* simulate = app.add_subcommand("simulate", "False-positive-rate study, or emit one synthetic dataset");
  common(simulate);
  simulation(simulate);
  opts.add(simulate, "--methods", f.methods, "mosaic, naive_perm, naive_bootstrap");
  opts.add(simulate, "--B", f.B, "Bootstrap replicates");
  opts.add(simulate, "--emit-returns", f.emit_returns, "Write one simulated returns CSV and stop");
  opts.add(simulate, "--emit-exposures", f.emit_exposures, "Write its exposures CSV");

  CLI::App* power = app.add_subcommand("power", "Power study over (rho, s0) cells (CSV)");
  common(power);
  simulation(power);
  opts.add(power, "--rhos", f.rhos, "Signal sizes");
  opts.add(power, "--s0s", f.s0s, "Sparsity fractions");
  opts.add(power, "--gammas", f.gammas, "Quantile levels");
  opts.add(power, "--K", f.K, "Relabelings in the adaptive layer");
  opts.add(power, "--null-reps", f.null_reps, "Simulated nulls for the OLS double oracle");

  CLI::App* validate_cmd = app.add_subcommand("validate-tiling", "Check a tiling JSON against a panel");
  common(validate_cmd);
  data(validate_cmd);
  opts.add(validate_cmd, "--tiling-file", f.tiling_in, "Tiling JSON file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "cli: " << e.what() << "\n";
    return kInputError;
  }

  try {
    json config = json::object();
    if (!f.config.empty()) config = read_json_file(f.config);
    if (!config.is_object()) throw ArgumentError(kModule, "config file must hold a JSON object");
    const Resolver resolver(opts, config);
    const std::uint64_t seed = resolver.get<std::uint64_t>("seed", f.seed, default_seed());
    const unsigned threads = resolver.get<unsigned>("threads", f.threads, 1u);
    if (threads < 1) throw ArgumentError(kModule, "threads must be at least 1");
    const Context ctx{f, resolver, seed, threads, err};

    std::string result;
    bool failed = false;
    if (test->parsed()) {
      result = cmd_test(ctx);
    } else if (rolling->parsed()) {
      result = cmd_rolling(ctx);
    } else if (improve->parsed()) {
      result = cmd_improve(ctx);
    } else if (simulate->parsed()) {
      result = cmd_simulate(ctx);
    } else if (power->parsed()) {
      result = cmd_power(ctx);
    } else {
      result = cmd_validate_tiling(ctx, failed);
    }
    const std::string output = resolver.get<std::string>("output", f.output, "");
    if (output.empty()) {
      out << result;
    } else {
      write_text_file(output, result);
    }
    if (failed) {
      err << "validate-tiling: tiling failed validation\n";
      return kInputError;
    }
    return kOk;
  } catch (const Error& e) {
    err << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const json::exception& e) {
    err << "cli: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInvariantViolation;
  }
}

}  // namespace mosaic::cli
