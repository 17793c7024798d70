#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mosaic {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// T x p returns with an availability mask. Unavailable cells hold 0 and are
/// never read by any computation.
struct ReturnsPanel {
  std::vector<std::string> times;   // strictly increasing ISO-8601 dates
  std::vector<std::string> assets;  // unique identifiers
  Matrix values;
  Mask available;

  [[nodiscard]] std::size_t T() const noexcept { return times.size(); }
  [[nodiscard]] std::size_t p() const noexcept { return assets.size(); }
  [[nodiscard]] bool complete() const { return available.size() == 0 || available.all(); }

  /// Rows [begin, end).
  [[nodiscard]] ReturnsPanel slice(std::size_t begin, std::size_t end) const;
};

/// Validates the panel invariants and returns the assembled panel.
ReturnsPanel make_panel(std::vector<std::string> times, std::vector<std::string> assets, Matrix values,
                        Mask available);

/// Complete panel with synthetic date labels; used by simulations and tests.
ReturnsPanel make_complete_panel(const Matrix& values);

/// Piecewise-constant p x k exposures. Segment s covers
/// [change_points[s], change_points[s+1]) and uses matrices[s].
struct ExposureSeries {
  std::vector<std::size_t> change_points;
  std::vector<Matrix> matrices;
  std::vector<std::string> factor_ids;
  std::size_t T = 0;

  [[nodiscard]] std::size_t k() const noexcept { return factor_ids.size(); }
  [[nodiscard]] std::size_t p() const { return matrices.empty() ? 0 : static_cast<std::size_t>(matrices.front().rows()); }
  [[nodiscard]] std::size_t segments() const noexcept { return matrices.size(); }
  [[nodiscard]] std::size_t segment_of(std::size_t t) const;
  [[nodiscard]] std::pair<std::size_t, std::size_t> segment_range(std::size_t s) const;
  [[nodiscard]] const Matrix& at(std::size_t t) const { return matrices[segment_of(t)]; }
  [[nodiscard]] ExposureSeries slice(std::size_t begin, std::size_t end) const;
};

/// One segment holding `loadings` for all T timepoints.
ExposureSeries constant_exposures(const Matrix& loadings, std::size_t T, std::vector<std::string> factor_ids = {});

/// Builds a series from one matrix per timepoint, merging equal neighbours.
ExposureSeries exposures_from_timepoints(std::span<const Matrix> per_time, std::vector<std::string> factor_ids = {});

/// Adds change-points (e.g. weekly boundaries) without altering any values.
ExposureSeries split_segments(const ExposureSeries& exposures, std::span<const std::size_t> extra_change_points);

struct AvailabilitySummary {
  std::vector<std::size_t> always_available;
  std::vector<std::vector<std::size_t>> per_segment_available;
};

/// Reads `date,asset_id,return` rows. Assets are ordered lexicographically and
/// absent (date, asset) pairs become unavailable cells.
ReturnsPanel load_returns(std::istream& in);

/// Reads `date,asset_id,factor_id,value` rows aligned to `panel`. Rows for
/// dates or assets outside the panel are ignored.
ExposureSeries load_exposures(std::istream& in, const ReturnsPanel& panel);

AvailabilitySummary summarize_availability(const ReturnsPanel& panel, const ExposureSeries& exposures);

void write_returns(std::ostream& out, const ReturnsPanel& panel);
void write_exposures(std::ostream& out, const ReturnsPanel& panel, const ExposureSeries& exposures);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

/// Checks YYYY-MM-DD (optionally followed by a time part) for a valid calendar date.
bool is_iso_date(std::string_view text);

}  // namespace mosaic
