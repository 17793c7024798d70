#include "mosaic/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mosaic/errors.hpp"
#include "mosaic/random.hpp"

namespace mosaic {

namespace {

constexpr const char* kModule = "stats";

CorrelationEstimate correlation_of(const Matrix& X, std::vector<std::size_t> assets, std::size_t universe,
                                   std::size_t begin, std::size_t end) {
  const Eigen::Index n = X.rows();
  const Eigen::Index q = X.cols();
  Matrix Z = X.rowwise() - X.colwise().mean();
  for (Eigen::Index c = 0; c < q; ++c) {
    const double norm = Z.col(c).norm();
    if (norm > 0.0) {
      Z.col(c) /= norm;
    } else {
      Z.col(c).setZero();
    }
  }
  (void)n;
  Matrix C = Matrix::Zero(q, q);
  C.selfadjointView<Eigen::Lower>().rankUpdate(Z.transpose());
  for (Eigen::Index a = 0; a < q; ++a) {
    for (Eigen::Index b = 0; b < a; ++b) {
      const double v = std::clamp(C(a, b), -1.0, 1.0);
      C(a, b) = v;
      C(b, a) = v;
    }
    C(a, a) = 1.0;
  }
  return CorrelationEstimate{std::move(C), std::move(assets), universe, begin, end};
}

}  // namespace

std::vector<std::size_t> defined_columns(const ResidualPanel& residuals, std::size_t begin, std::size_t end) {
  std::vector<std::size_t> cols;
  const auto len = static_cast<Eigen::Index>(end - begin);
  for (Eigen::Index j = 0; j < residuals.values.cols(); ++j) {
    if (residuals.defined.size() == 0 || residuals.defined.col(j).segment(static_cast<Eigen::Index>(begin), len).all()) {
      cols.push_back(static_cast<std::size_t>(j));
    }
  }
  return cols;
}

CorrelationEstimate empirical_correlation(const ResidualPanel& residuals, std::size_t begin, std::size_t end,
                                          std::span<const std::size_t> assets) {
  if (end > residuals.T() || begin > end) throw ArgumentError(kModule, "correlation window outside the panel");
  if (end - begin < 2) throw ArgumentError(kModule, "correlation window needs at least 2 timepoints");
  const auto len = static_cast<Eigen::Index>(end - begin);
  Matrix X(len, static_cast<Eigen::Index>(assets.size()));
  for (std::size_t c = 0; c < assets.size(); ++c) {
    const auto j = static_cast<Eigen::Index>(assets[c]);
    if (assets[c] >= residuals.p()) throw ArgumentError(kModule, "asset index outside the panel");
    if (residuals.defined.size() != 0 && !residuals.defined.col(j).segment(static_cast<Eigen::Index>(begin), len).all()) {
      throw ArgumentError(kModule, "asset " + std::to_string(assets[c]) + " has undefined residuals in the window");
    }
    X.col(static_cast<Eigen::Index>(c)) = residuals.values.col(j).segment(static_cast<Eigen::Index>(begin), len);
  }
  return correlation_of(X, std::vector<std::size_t>(assets.begin(), assets.end()), residuals.p(), begin, end);
}

CorrelationEstimate empirical_correlation(const ResidualPanel& residuals) {
  if (residuals.complete()) {
    if (residuals.T() < 2) throw ArgumentError(kModule, "correlation window needs at least 2 timepoints");
    std::vector<std::size_t> all(residuals.p());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return correlation_of(residuals.values, std::move(all), residuals.p(), 0, residuals.T());
  }
  const auto cols = defined_columns(residuals, 0, residuals.T());
  return empirical_correlation(residuals, 0, residuals.T(), cols);
}

Vector max_abs_correlations(const CorrelationEstimate& corr) {
  const Eigen::Index q = corr.matrix.rows();
  if (q < 2) throw ArgumentError(kModule, "maximum correlations need at least 2 assets");
  Vector mc(q);
  for (Eigen::Index a = 0; a < q; ++a) {
    double best = 0.0;
    for (Eigen::Index b = 0; b < q; ++b) {
      if (b != a) best = std::max(best, std::abs(corr.matrix(a, b)));
    }
    mc(a) = best;
  }
  return mc;
}

double mmc(const CorrelationEstimate& corr) { return max_abs_correlations(corr).mean(); }

double lower_quantile(std::vector<double> values, double gamma) {
  if (values.empty()) throw ArgumentError(kModule, "quantile of an empty set");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ArgumentError(kModule, "quantile level must lie in [0, 1]");
  const auto idx = static_cast<std::size_t>(std::floor(gamma * static_cast<double>(values.size() - 1)));
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(idx), values.end());
  return values[idx];
}

double qmc(const CorrelationEstimate& corr, double gamma) {
  const Vector mc = max_abs_correlations(corr);
  return lower_quantile(std::vector<double>(mc.begin(), mc.end()), gamma);
}

const std::vector<double>& default_gammas() {
  static const std::vector<double> gammas{0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99};
  return gammas;
}

std::vector<double> qmc_family(const CorrelationEstimate& corr, std::span<const double> gammas) {
  const Vector mc = max_abs_correlations(corr);
  std::vector<double> sorted(mc.begin(), mc.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  out.reserve(gammas.size());
  for (double g : gammas) {
    if (!(g >= 0.0 && g <= 1.0)) throw ArgumentError(kModule, "quantile level must lie in [0, 1]");
    out.push_back(sorted[static_cast<std::size_t>(std::floor(g * static_cast<double>(sorted.size() - 1)))]);
  }
  return out;
}

SparseLoading greedy_sparse_pca(const CorrelationEstimate& corr, std::size_t ell) {
  const auto q = static_cast<std::size_t>(corr.matrix.rows());
  if (ell < 1 || ell > q) throw ArgumentError(kModule, "sparsity must lie in [1, " + std::to_string(q) + "]");
  std::vector<std::size_t> order(q);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (q >= 2) {
    const Vector mc = max_abs_correlations(corr);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return mc(static_cast<Eigen::Index>(a)) > mc(static_cast<Eigen::Index>(b));
    });
  }
  std::vector<std::size_t> local(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(ell));
  std::sort(local.begin(), local.end());
  Matrix sub(static_cast<Eigen::Index>(ell), static_cast<Eigen::Index>(ell));
  for (std::size_t a = 0; a < ell; ++a) {
    for (std::size_t b = 0; b < ell; ++b) {
      sub(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          corr.matrix(static_cast<Eigen::Index>(local[a]), static_cast<Eigen::Index>(local[b]));
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sub);
  Vector top = eig.eigenvectors().col(static_cast<Eigen::Index>(ell) - 1);
  top.normalize();
  Eigen::Index arg = 0;
  for (Eigen::Index i = 1; i < top.size(); ++i) {
    if (std::abs(top(i)) > std::abs(top(arg))) arg = i;
  }
  if (top(arg) < 0) top = -top;

  const std::size_t p = corr.universe == 0 ? q : corr.universe;
  SparseLoading out;
  out.vector = Vector::Zero(static_cast<Eigen::Index>(p));
  out.sparsity = ell;
  for (std::size_t a = 0; a < ell; ++a) {
    const std::size_t asset = corr.assets.empty() ? local[a] : corr.assets[local[a]];
    out.vector(static_cast<Eigen::Index>(asset)) = top(static_cast<Eigen::Index>(a));
    out.support.push_back(asset);
  }
  std::sort(out.support.begin(), out.support.end());
  return out;
}

std::vector<std::size_t> sparsity_grid(std::size_t p, std::size_t count, std::size_t low) {
  if (p < 1 || count < 1) throw ArgumentError(kModule, "sparsity grid needs p >= 1 and count >= 1");
  std::vector<std::size_t> grid;
  for (std::size_t i = 0; i < count; ++i) {
    const double frac = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    const double value = static_cast<double>(low) + frac * (static_cast<double>(p) - static_cast<double>(low));
    const auto rounded = static_cast<long long>(std::llround(value));
    grid.push_back(static_cast<std::size_t>(std::clamp<long long>(rounded, 1, static_cast<long long>(p))));
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

BcvResult bcv_r2(const ResidualPanel& test, const Tiling& test_tiling, std::span<const SparseLoading> loadings) {
  if (loadings.empty()) throw ArgumentError(kModule, "BCV needs at least one loading");
  if (test_tiling.T != test.T() || test_tiling.p != test.p()) {
    throw ArgumentError(kModule, "test tiling does not match the residual panel");
  }
  Matrix E = test.values;
  if (test.defined.size() != 0) E = test.defined.select(test.values, Matrix::Zero(E.rows(), E.cols()));

  BcvResult result;
  for (const SparseLoading& loading : loadings) {
    if (static_cast<std::size_t>(loading.vector.size()) != test.p()) {
      throw ArgumentError(kModule, "loading length does not match the panel width");
    }
    double err = 0.0;
    double total = 0.0;
    for (const Tile& tile : test_tiling.tiles) {
      Vector w = loading.vector;
      for (std::size_t j : tile.group) w(static_cast<Eigen::Index>(j)) = 0.0;
      const double norm2 = w.squaredNorm();
      for (std::size_t t : tile.batch) {
        const auto ti = static_cast<Eigen::Index>(t);
        const double z = norm2 > 0.0 ? E.row(ti).dot(w) / norm2 : 0.0;
        for (std::size_t j : tile.group) {
          const auto ji = static_cast<Eigen::Index>(j);
          const double eps = E(ti, ji);
          const double pred = loading.vector(ji) * z;
          err += (pred - eps) * (pred - eps);
          total += eps * eps;
        }
      }
    }
    result.r2.push_back(total > 0.0 ? 1.0 - err / total : 0.0);
  }
  result.max_r2 = *std::max_element(result.r2.begin(), result.r2.end());
  return result;
}

BcvResult bcv_r2(const MosaicResiduals& /*train*/, const MosaicResiduals& test, std::span<const SparseLoading> loadings) {
  return bcv_r2(test.materialize(), test.tiling, loadings);
}

Statistic mmc_statistic() {
  return {"mmc", [](const ResidualPanel& r) { return mmc(empirical_correlation(r)); }, true};
}

Statistic qmc_statistic(double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ArgumentError(kModule, "quantile level must lie in [0, 1]");
  return {"qmc", [gamma](const ResidualPanel& r) { return qmc(empirical_correlation(r), gamma); }, true};
}

MultiStatisticFn qmc_family_statistic(std::vector<double> gammas) {
  if (gammas.empty()) throw ArgumentError(kModule, "QMC family needs at least one quantile level");
  return [gammas = std::move(gammas)](const ResidualPanel& r) { return qmc_family(empirical_correlation(r), gammas); };
}

StatisticFn bcv_statistic(Tiling tiling, std::vector<SparseLoading> loadings) {
  return [tiling = std::move(tiling), loadings = std::move(loadings)](const ResidualPanel& r) {
    return bcv_r2(r, tiling, loadings).max_r2;
  };
}

StatisticConfig statistic_config_from_json(const nlohmann::json& j) {
  StatisticConfig config;
  try {
    if (j.contains("type")) config.type = j.at("type").get<std::string>();
    if (j.contains("params")) {
      const auto& params = j.at("params");
      if (params.contains("gamma")) config.gamma = params.at("gamma").get<double>();
      if (params.contains("gammas")) config.gammas = params.at("gammas").get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(kModule, std::string("malformed statistic config: ") + e.what());
  }
  if (config.type != "mmc" && config.type != "qmc" && config.type != "adaptive_qmc" && config.type != "bcv_r2") {
    throw ArgumentError(kModule, "unknown statistic type '" + config.type + "'");
  }
  if (!(config.gamma >= 0.0 && config.gamma <= 1.0)) throw ArgumentError(kModule, "gamma must lie in [0, 1]");
  if (config.gammas.empty()) throw ArgumentError(kModule, "gammas must not be empty");
  return config;
}

nlohmann::json statistic_config_to_json(const StatisticConfig& config) {
  return {{"type", config.type}, {"params", {{"gamma", config.gamma}, {"gammas", config.gammas}}}};
}

ExposureSeries effective_exposures(const ExposureSeries& exposures, const TilingConfig& config) {
  ExposureSeries out = config.augment ? augment_exposures(exposures) : exposures;
  if (!config.extra_change_points.empty()) out = split_segments(out, config.extra_change_points);
  return out;
}

Tiling build_tiling(const ReturnsPanel& panel, const ExposureSeries& exposures, const TilingConfig& config,
                    std::uint64_t seed) {
  std::optional<AvailabilitySummary> availability;
  if (!panel.complete()) availability = summarize_availability(panel, exposures);
  const AvailabilitySummary* avail = availability ? &*availability : nullptr;
  if (config.mode == "default") {
    return default_tiling(panel.T(), panel.p(), exposures.k(), exposures.change_points, avail, seed, config.options);
  }
  if (config.mode == "adaptive") {
    return adaptive_tiling(panel, exposures, exposures.k(), seed, config.options, avail);
  }
  throw ArgumentError(kModule, "unknown tiling mode '" + config.mode + "'");
}

StatReport run_statistic(const MosaicResiduals& mosaic, const StatisticConfig& statistic,
                         const InferenceOptions& options) {
  if (statistic.type == "mmc") return mosaic_test(mosaic, mmc_statistic().evaluate, options);
  if (statistic.type == "qmc") return mosaic_test(mosaic, qmc_statistic(statistic.gamma).evaluate, options);
  if (statistic.type == "adaptive_qmc") {
    return adaptive_mosaic_test(mosaic, qmc_family_statistic(statistic.gammas), max_standardized_meta(), options);
  }
  throw ArgumentError(kModule, "statistic '" + statistic.type + "' needs fitted loadings; use the improve command");
}

std::vector<StatReport> rolling_analysis(const ReturnsPanel& panel, const ExposureSeries& exposures,
                                         const TilingConfig& tiling, const StatisticConfig& statistic,
                                         std::size_t window, std::size_t stride, const InferenceOptions& options) {
  if (window < 2 || window > panel.T()) {
    throw ArgumentError(kModule, "window " + std::to_string(window) + " must lie in [2, T=" +
                                     std::to_string(panel.T()) + "]");
  }
  if (stride < 1) throw ArgumentError(kModule, "stride must be positive");
  const ExposureSeries effective = effective_exposures(exposures, tiling);
  std::vector<std::size_t> ends;
  for (std::size_t end = window; end <= panel.T(); end += stride) ends.push_back(end);
  std::vector<StatReport> reports;
  reports.reserve(ends.size());
  for (std::size_t w = 0; w < ends.size(); ++w) {
    const std::size_t begin = ends[w] - window;
    const ReturnsPanel sub = panel.slice(begin, ends[w]);
    const ExposureSeries sub_exp = effective.slice(begin, ends[w]);
    InferenceOptions local = options;
    local.seed = rng::derive_seed(options.seed, {rng::stream::kWindow, w});
    const Tiling t = build_tiling(sub, sub_exp, tiling, local.seed);
    const MosaicResiduals mosaic = mosaic_residuals(sub, sub_exp, t, options.threads);
    StatReport report = run_statistic(mosaic, statistic, local);
    report.label = panel.times[ends[w] - 1];
    reports.push_back(std::move(report));
  }
  return reports;
}

ImproveReport improvement_analysis(const ReturnsPanel& panel, const ExposureSeries& exposures,
                                   const TilingConfig& tiling, const ImproveOptions& improve,
                                   const InferenceOptions& options) {
  const std::size_t T = panel.T();
  if (improve.split < 2 || improve.split > T) {
    throw ArgumentError(kModule, "fold boundary must leave at least 2 rows in the first fold and lie inside the panel");
  }
  if (improve.split == T) throw ArgumentError(kModule, "second fold is empty");
  const ExposureSeries effective = effective_exposures(exposures, tiling);

  // First fold: loadings from the mosaic residual correlations.
  const ReturnsPanel fold1 = panel.slice(0, improve.split);
  const ExposureSeries exp1 = effective.slice(0, improve.split);
  const std::uint64_t seed1 = rng::derive_seed(options.seed, {rng::stream::kWindow, 0, 1});
  const MosaicResiduals train = mosaic_residuals(fold1, exp1, build_tiling(fold1, exp1, tiling, seed1), options.threads);
  const CorrelationEstimate corr = empirical_correlation(train.materialize());
  const std::size_t q = corr.assets.size();
  if (q < 2) throw ArgumentError(kModule, "first fold has fewer than 2 fully observed assets");
  ImproveReport out;
  out.loadings.push_back(greedy_sparse_pca(corr, q));
  const auto grid = improve.sparsities.empty() ? sparsity_grid(q) : improve.sparsities;
  for (std::size_t ell : grid) {
    if (ell < 1 || ell > q) throw ArgumentError(kModule, "sparsity " + std::to_string(ell) + " outside [1, " + std::to_string(q) + "]");
    out.loadings.push_back(greedy_sparse_pca(corr, ell));
  }

  // Second fold, optionally in windows.
  const std::size_t len2 = T - improve.split;
  const std::size_t window = improve.window.value_or(len2);
  if (window < 2 || window > len2) throw ArgumentError(kModule, "window must lie in [2, length of the second fold]");
  const std::size_t stride = improve.stride == 0 ? window : improve.stride;
  std::size_t w = 0;
  for (std::size_t end = improve.split + window; end <= T; end += stride, ++w) {
    const std::size_t begin = end - window;
    const ReturnsPanel sub = panel.slice(begin, end);
    const ExposureSeries sub_exp = effective.slice(begin, end);
    InferenceOptions local = options;
    local.seed = rng::derive_seed(options.seed, {rng::stream::kWindow, w, 2});
    const Tiling t = build_tiling(sub, sub_exp, tiling, local.seed);
    const MosaicResiduals test = mosaic_residuals(sub, sub_exp, t, options.threads);
    out.bcv.push_back(bcv_r2(train, test, out.loadings));
    StatReport report = mosaic_test(test, bcv_statistic(t, out.loadings), local);
    report.label = panel.times[end - 1];
    out.reports.push_back(std::move(report));
  }
  return out;
}

}  // namespace mosaic
