#include "mosaic/panel.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>

#include "mosaic/errors.hpp"

namespace mosaic {

namespace {

constexpr const char* kModule = "panel";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return fields;
}

bool parse_finite(std::string_view text, double& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

// Iterates data lines after validating the header. Calls fn(line_number, fields).
template <class Fn>
void for_each_row(std::istream& in, std::string_view expected_header, std::size_t n_fields, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (line_no == 1 && view.size() >= 3 && static_cast<unsigned char>(view[0]) == 0xEF &&
        static_cast<unsigned char>(view[1]) == 0xBB && static_cast<unsigned char>(view[2]) == 0xBF) {
      view.remove_prefix(3);
    }
    if (view.empty()) continue;
    if (!header_seen) {
      auto fields = split_fields(view);
      std::string joined;
      for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) joined += ',';
        joined += fields[i];
      }
      if (joined != expected_header) {
        throw ParseError(kModule, line_no, "expected header '" + std::string(expected_header) + "'");
      }
      header_seen = true;
      continue;
    }
    auto fields = split_fields(view);
    if (fields.size() != n_fields) {
      throw ParseError(kModule, line_no,
                       "expected " + std::to_string(n_fields) + " fields, got " + std::to_string(fields.size()));
    }
    fn(line_no, fields);
  }
  if (!header_seen) throw ParseError(kModule, line_no, "missing header '" + std::string(expected_header) + "'");
}

template <class T>
std::vector<std::string> sorted_keys(const std::map<std::string, T>& m) {
  std::vector<std::string> keys;
  keys.reserve(m.size());
  for (const auto& [k, _] : m) keys.push_back(k);
  return keys;
}

}  // namespace

bool is_iso_date(std::string_view text) {
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') return false;
  if (text.size() > 10 && text[10] != 'T' && text[10] != ' ') return false;
  auto number = [&](std::size_t pos, std::size_t len, int& out) {
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (text[i] < '0' || text[i] > '9') return false;
    }
    std::from_chars(text.data() + pos, text.data() + pos + len, out);
    return true;
  };
  int y = 0, m = 0, d = 0;
  if (!number(0, 4, y) || !number(5, 2, m) || !number(8, 2, d)) return false;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  return ymd.ok();
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

ReturnsPanel ReturnsPanel::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > T()) throw ArgumentError(kModule, "slice out of range");
  ReturnsPanel out;
  out.times.assign(times.begin() + static_cast<std::ptrdiff_t>(begin), times.begin() + static_cast<std::ptrdiff_t>(end));
  out.assets = assets;
  const auto rows = static_cast<Eigen::Index>(end - begin);
  out.values = values.middleRows(static_cast<Eigen::Index>(begin), rows);
  out.available = available.middleRows(static_cast<Eigen::Index>(begin), rows);
  return out;
}

ReturnsPanel make_panel(std::vector<std::string> times, std::vector<std::string> assets, Matrix values,
                        Mask available) {
  const auto T = static_cast<Eigen::Index>(times.size());
  const auto p = static_cast<Eigen::Index>(assets.size());
  if (values.rows() != T || values.cols() != p || available.rows() != T || available.cols() != p) {
    throw ArgumentError(kModule, "panel dimensions do not match labels");
  }
  for (std::size_t t = 1; t < times.size(); ++t) {
    if (!(times[t - 1] < times[t])) throw ArgumentError(kModule, "times must be strictly increasing");
  }
  std::set<std::string> unique(assets.begin(), assets.end());
  if (unique.size() != assets.size()) throw DuplicationError(kModule, "asset identifiers must be unique");
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index j = 0; j < p; ++j) {
      if (available(t, j)) {
        if (!std::isfinite(values(t, j))) throw ArgumentError(kModule, "non-finite value in an available cell");
      } else {
        values(t, j) = 0.0;
      }
    }
  }
  return ReturnsPanel{std::move(times), std::move(assets), std::move(values), std::move(available)};
}

ReturnsPanel make_complete_panel(const Matrix& values) {
  std::vector<std::string> times(static_cast<std::size_t>(values.rows()));
  std::vector<std::string> assets(static_cast<std::size_t>(values.cols()));
  // Synthetic labels: day offsets from 2000-01-01 keep ISO ordering for any T.
  using namespace std::chrono;
  const sys_days origin = year{2000} / January / 1;
  for (std::size_t t = 0; t < times.size(); ++t) {
    const year_month_day ymd{origin + days{static_cast<int>(t)}};
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    times[t] = buf;
  }
  const int width = static_cast<int>(std::to_string(assets.size()).size());
  for (std::size_t j = 0; j < assets.size(); ++j) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "A%0*zu", width, j);
    assets[j] = buf;
  }
  Mask mask = Mask::Constant(values.rows(), values.cols(), true);
  return make_panel(std::move(times), std::move(assets), values, std::move(mask));
}

std::size_t ExposureSeries::segment_of(std::size_t t) const {
  if (t >= T || change_points.empty()) throw ArgumentError(kModule, "timepoint outside exposure series");
  const auto it = std::upper_bound(change_points.begin(), change_points.end(), t);
  return static_cast<std::size_t>(it - change_points.begin()) - 1;
}

std::pair<std::size_t, std::size_t> ExposureSeries::segment_range(std::size_t s) const {
  const std::size_t end = s + 1 < change_points.size() ? change_points[s + 1] : T;
  return {change_points[s], end};
}

ExposureSeries ExposureSeries::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > T) throw ArgumentError(kModule, "exposure slice out of range");
  ExposureSeries out;
  out.factor_ids = factor_ids;
  out.T = end - begin;
  if (begin == end) return out;
  const std::size_t first = segment_of(begin);
  const std::size_t last = segment_of(end - 1);
  for (std::size_t s = first; s <= last; ++s) {
    out.change_points.push_back(std::max(change_points[s], begin) - begin);
    out.matrices.push_back(matrices[s]);
  }
  return out;
}

ExposureSeries constant_exposures(const Matrix& loadings, std::size_t T, std::vector<std::string> factor_ids) {
  if (factor_ids.empty()) {
    for (Eigen::Index f = 0; f < loadings.cols(); ++f) factor_ids.push_back("F" + std::to_string(f));
  }
  if (factor_ids.size() != static_cast<std::size_t>(loadings.cols())) {
    throw ArgumentError(kModule, "factor id count does not match exposure columns");
  }
  ExposureSeries out;
  out.factor_ids = std::move(factor_ids);
  out.T = T;
  if (T > 0) {
    out.change_points = {0};
    out.matrices = {loadings};
  }
  return out;
}

ExposureSeries exposures_from_timepoints(std::span<const Matrix> per_time, std::vector<std::string> factor_ids) {
  ExposureSeries out;
  out.T = per_time.size();
  if (per_time.empty()) {
    out.factor_ids = std::move(factor_ids);
    return out;
  }
  const Eigen::Index k = per_time.front().cols();
  if (factor_ids.empty()) {
    for (Eigen::Index f = 0; f < k; ++f) factor_ids.push_back("F" + std::to_string(f));
  }
  out.factor_ids = std::move(factor_ids);
  for (std::size_t t = 0; t < per_time.size(); ++t) {
    if (per_time[t].rows() != per_time.front().rows() || per_time[t].cols() != k) {
      throw ArgumentError(kModule, "exposure matrices must share dimensions");
    }
    if (t == 0 || per_time[t] != out.matrices.back()) {
      out.change_points.push_back(t);
      out.matrices.push_back(per_time[t]);
    }
  }
  return out;
}

ExposureSeries split_segments(const ExposureSeries& exposures, std::span<const std::size_t> extra_change_points) {
  std::set<std::size_t> points(exposures.change_points.begin(), exposures.change_points.end());
  for (std::size_t cp : extra_change_points) {
    if (cp >= exposures.T) throw ArgumentError(kModule, "change-point " + std::to_string(cp) + " outside series");
    points.insert(cp);
  }
  ExposureSeries out;
  out.factor_ids = exposures.factor_ids;
  out.T = exposures.T;
  for (std::size_t cp : points) {
    out.change_points.push_back(cp);
    out.matrices.push_back(exposures.at(cp));
  }
  return out;
}

ReturnsPanel load_returns(std::istream& in) {
  struct Cell {
    std::string date;
    std::string asset;
    double value;
    std::size_t line;
  };
  std::vector<Cell> cells;
  std::map<std::string, std::size_t> dates;
  std::map<std::string, std::size_t> assets;
  for_each_row(in, "date,asset_id,return", 3, [&](std::size_t line, const std::vector<std::string_view>& f) {
    if (!is_iso_date(f[0])) throw ParseError(kModule, line, "unparseable date '" + std::string(f[0]) + "'");
    if (f[1].empty()) throw ParseError(kModule, line, "empty asset_id");
    double value = 0.0;
    if (!parse_finite(f[2], value)) {
      throw ParseError(kModule, line, "return '" + std::string(f[2]) + "' is not a finite number");
    }
    cells.push_back({std::string(f[0]), std::string(f[1]), value, line});
    dates.emplace(f[0], 0);
    assets.emplace(f[1], 0);
  });
  std::size_t idx = 0;
  for (auto& [_, i] : dates) i = idx++;
  idx = 0;
  for (auto& [_, i] : assets) i = idx++;

  const auto T = static_cast<Eigen::Index>(dates.size());
  const auto p = static_cast<Eigen::Index>(assets.size());
  Matrix values = Matrix::Zero(T, p);
  Mask available = Mask::Constant(T, p, false);
  for (const Cell& c : cells) {
    const auto t = static_cast<Eigen::Index>(dates[c.date]);
    const auto j = static_cast<Eigen::Index>(assets[c.asset]);
    if (available(t, j)) {
      throw DuplicationError(kModule, "line " + std::to_string(c.line) + ": duplicate cell (" + c.date + ", " +
                                          c.asset + ")");
    }
    available(t, j) = true;
    values(t, j) = c.value;
  }
  return make_panel(sorted_keys(dates), sorted_keys(assets), std::move(values), std::move(available));
}

ExposureSeries load_exposures(std::istream& in, const ReturnsPanel& panel) {
  std::unordered_map<std::string, std::size_t> date_index;
  std::unordered_map<std::string, std::size_t> asset_index;
  for (std::size_t t = 0; t < panel.T(); ++t) date_index.emplace(panel.times[t], t);
  for (std::size_t j = 0; j < panel.p(); ++j) asset_index.emplace(panel.assets[j], j);

  struct Entry {
    std::size_t t, j;
    std::string factor;
    double value;
    std::size_t line;
  };
  std::vector<Entry> entries;
  std::map<std::string, std::size_t> factors;
  for_each_row(in, "date,asset_id,factor_id,value", 4, [&](std::size_t line, const std::vector<std::string_view>& f) {
    if (!is_iso_date(f[0])) throw ParseError(kModule, line, "unparseable date '" + std::string(f[0]) + "'");
    if (f[2].empty()) throw ParseError(kModule, line, "empty factor_id");
    double value = 0.0;
    if (!parse_finite(f[3], value)) {
      throw ParseError(kModule, line, "exposure '" + std::string(f[3]) + "' is not a finite number");
    }
    factors.emplace(f[2], 0);
    const auto dt = date_index.find(std::string(f[0]));
    const auto as = asset_index.find(std::string(f[1]));
    if (dt == date_index.end() || as == asset_index.end()) return;
    entries.push_back({dt->second, as->second, std::string(f[2]), value, line});
  });
  std::size_t idx = 0;
  for (auto& [_, i] : factors) i = idx++;
  const std::size_t k = factors.size();
  const std::size_t p = panel.p();

  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.t < b.t; });

  ExposureSeries out;
  out.factor_ids = sorted_keys(factors);
  out.T = panel.T();
  std::size_t cursor = 0;
  Matrix current(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k));
  Mask seen(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k));
  for (std::size_t t = 0; t < panel.T(); ++t) {
    current.setZero();
    seen.setConstant(false);
    for (; cursor < entries.size() && entries[cursor].t == t; ++cursor) {
      const Entry& e = entries[cursor];
      const auto j = static_cast<Eigen::Index>(e.j);
      const auto f = static_cast<Eigen::Index>(factors[e.factor]);
      if (seen(j, f)) {
        throw DuplicationError(kModule, "line " + std::to_string(e.line) + ": duplicate exposure (" +
                                            panel.times[t] + ", " + panel.assets[e.j] + ", " + e.factor + ")");
      }
      seen(j, f) = true;
      current(j, f) = e.value;
    }
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t f = 0; f < k; ++f) {
        if (!seen(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(f))) {
          throw CoverageError(kModule, "no exposure for asset " + panel.assets[j] + ", factor " + out.factor_ids[f] +
                                           " on " + panel.times[t]);
        }
      }
    }
    if (t == 0 || current != out.matrices.back()) {
      out.change_points.push_back(t);
      out.matrices.push_back(current);
    }
  }
  return out;
}

AvailabilitySummary summarize_availability(const ReturnsPanel& panel, const ExposureSeries& exposures) {
  AvailabilitySummary summary;
  if (panel.T() == 0) return summary;
  if (exposures.T != panel.T()) throw ArgumentError(kModule, "exposures and panel cover different time spans");
  std::vector<bool> always(panel.p(), true);
  for (std::size_t s = 0; s < exposures.segments(); ++s) {
    const auto [begin, end] = exposures.segment_range(s);
    std::vector<std::size_t> observed;
    for (std::size_t j = 0; j < panel.p(); ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      const bool full = panel.available.col(col)
                            .segment(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin))
                            .all();
      if (full) {
        observed.push_back(j);
      } else {
        always[j] = false;
      }
    }
    summary.per_segment_available.push_back(std::move(observed));
  }
  for (std::size_t j = 0; j < panel.p(); ++j) {
    if (always[j]) summary.always_available.push_back(j);
  }
  return summary;
}

void write_returns(std::ostream& out, const ReturnsPanel& panel) {
  out << "date,asset_id,return\n";
  for (std::size_t t = 0; t < panel.T(); ++t) {
    for (std::size_t j = 0; j < panel.p(); ++j) {
      const auto tt = static_cast<Eigen::Index>(t);
      const auto jj = static_cast<Eigen::Index>(j);
      if (!panel.available(tt, jj)) continue;
      out << panel.times[t] << ',' << panel.assets[j] << ',' << format_double(panel.values(tt, jj)) << '\n';
    }
  }
}

void write_exposures(std::ostream& out, const ReturnsPanel& panel, const ExposureSeries& exposures) {
  if (exposures.T != panel.T() || exposures.p() != panel.p()) {
    throw ArgumentError(kModule, "exposures do not match panel dimensions");
  }
  out << "date,asset_id,factor_id,value\n";
  for (std::size_t t = 0; t < panel.T(); ++t) {
    const Matrix& L = exposures.at(t);
    for (std::size_t j = 0; j < panel.p(); ++j) {
      for (std::size_t f = 0; f < exposures.k(); ++f) {
        out << panel.times[t] << ',' << panel.assets[j] << ',' << exposures.factor_ids[f] << ','
            << format_double(L(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(f))) << '\n';
      }
    }
  }
}

}  // namespace mosaic
