#include <gtest/gtest.h>

#include <functional>

#include <sstream>

#include "mosaic/errors.hpp"
#include "mosaic/panel.hpp"
#include "support.hpp"

using namespace mosaic;
using mosaic::testing::gaussian;
using mosaic::testing::text;

namespace {

std::string exposures_csv(const std::vector<std::string>& dates, const std::vector<std::string>& assets,
                          const std::function<double(std::size_t, std::size_t)>& value) {
  std::string s = "date,asset_id,factor_id,value\n";
  for (std::size_t t = 0; t < dates.size(); ++t) {
    for (std::size_t j = 0; j < assets.size(); ++j) {
      s += dates[t] + "," + assets[j] + ",size," + format_double(value(t, j)) + "\n";
    }
  }
  return s;
}

}  // namespace

TEST(LoadReturns, CompleteGrid) {
  auto in = text("date,asset_id,return\n2024-01-02,B,0.5\n2024-01-02,A,1\n2024-01-03,A,-2\n2024-01-03,B,0.25\n");
  const ReturnsPanel panel = load_returns(in);
  ASSERT_EQ(panel.T(), 2u);
  ASSERT_EQ(panel.p(), 2u);
  EXPECT_EQ(panel.assets, (std::vector<std::string>{"A", "B"}));
  EXPECT_TRUE(panel.complete());
  EXPECT_EQ(panel.values(0, 1), 0.5);
  EXPECT_EQ(panel.values(1, 0), -2.0);
}

TEST(LoadReturns, AbsentPairBecomesMissing) {
  auto in = text("date,asset_id,return\n2024-01-02,A,1\n2024-01-02,B,2\n2024-01-03,A,3\n");
  const ReturnsPanel panel = load_returns(in);
  EXPECT_EQ(panel.available.count(), 3);
  EXPECT_FALSE(panel.available(1, 1));
}

TEST(LoadReturns, NaNIsRejectedWithLineNumber) {
  auto in = text("date,asset_id,return\n2024-01-02,A,1\n2024-01-02,B,NaN\n");
  try {
    (void)load_returns(in);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(LoadReturns, RejectsDuplicatesAndBadRows) {
  auto dup = text("date,asset_id,return\n2024-01-02,A,1\n2024-01-02,A,2\n");
  EXPECT_THROW((void)load_returns(dup), DuplicationError);
  auto short_row = text("date,asset_id,return\n2024-01-02,A\n");
  EXPECT_THROW((void)load_returns(short_row), ParseError);
  auto bad_date = text("date,asset_id,return\n2024-13-02,A,1\n");
  EXPECT_THROW((void)load_returns(bad_date), ParseError);
  auto bad_header = text("day,asset,ret\n2024-01-02,A,1\n");
  EXPECT_THROW((void)load_returns(bad_header), ParseError);
}

TEST(LoadExposures, IdenticalDatesGiveOneSegment) {
  auto rin = text("date,asset_id,return\n2024-01-02,A,1\n2024-01-02,B,2\n2024-01-03,A,3\n2024-01-03,B,4\n");
  const ReturnsPanel panel = load_returns(rin);
  auto ein = text(exposures_csv(panel.times, panel.assets, [](std::size_t, std::size_t j) { return 1.0 + j; }));
  const ExposureSeries ex = load_exposures(ein, panel);
  EXPECT_EQ(ex.change_points, std::vector<std::size_t>{0});
  EXPECT_EQ(ex.k(), 1u);
  EXPECT_EQ(ex.matrices[0](1, 0), 2.0);
}

TEST(LoadExposures, ChangeInferredAtIndexFive) {
  const ReturnsPanel panel = make_complete_panel(gaussian(8, 3, 1));
  auto ein = text(exposures_csv(panel.times, panel.assets, [](std::size_t t, std::size_t j) {
    return t < 5 ? 1.0 + j : 2.0 + j;
  }));
  const ExposureSeries ex = load_exposures(ein, panel);
  EXPECT_EQ(ex.change_points, (std::vector<std::size_t>{0, 5}));
  EXPECT_EQ(ex.segment_of(4), 0u);
  EXPECT_EQ(ex.segment_of(5), 1u);
}

TEST(LoadExposures, ZeroFactorIsAcceptedHere) {
  const ReturnsPanel panel = make_complete_panel(gaussian(3, 3, 2));
  auto ein = text(exposures_csv(panel.times, panel.assets, [](std::size_t, std::size_t) { return 0.0; }));
  const ExposureSeries ex = load_exposures(ein, panel);
  EXPECT_TRUE(ex.matrices[0].isZero());
}

TEST(LoadExposures, MissingAssetIsACoverageError) {
  const ReturnsPanel panel = make_complete_panel(gaussian(2, 2, 3));
  std::string csv = "date,asset_id,factor_id,value\n";
  csv += panel.times[0] + "," + panel.assets[0] + ",size,1\n";
  csv += panel.times[0] + "," + panel.assets[1] + ",size,1\n";
  csv += panel.times[1] + "," + panel.assets[0] + ",size,1\n";
  auto ein = text(csv);
  EXPECT_THROW((void)load_exposures(ein, panel), CoverageError);
  auto bad = text("date,asset_id,factor_id,value\n" + panel.times[0] + "," + panel.assets[0] + ",size,abc\n");
  EXPECT_THROW((void)load_exposures(bad, panel), ParseError);
}

TEST(Availability, FullMaskKeepsEveryAsset) {
  const ReturnsPanel panel = make_complete_panel(gaussian(6, 4, 4));
  const auto ex = constant_exposures(Matrix::Ones(4, 1), 6);
  const auto summary = summarize_availability(panel, ex);
  EXPECT_EQ(summary.always_available, (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(Availability, OneMissingCellDropsTheAssetFromItsSegment) {
  ReturnsPanel panel = make_complete_panel(gaussian(9, 5, 5));
  std::vector<Matrix> per_time(9, Matrix::Ones(5, 1));
  for (std::size_t t = 3; t < 6; ++t) per_time[t] *= 2.0;
  for (std::size_t t = 6; t < 9; ++t) per_time[t] *= 3.0;
  const auto ex = exposures_from_timepoints(per_time);
  ASSERT_EQ(ex.segments(), 3u);
  panel.available(7, 3) = false;
  const auto summary = summarize_availability(panel, ex);
  EXPECT_EQ(summary.per_segment_available[2], (std::vector<std::size_t>{0, 1, 2, 4}));
  EXPECT_EQ(summary.per_segment_available[1].size(), 5u);
  EXPECT_EQ(summary.always_available, (std::vector<std::size_t>{0, 1, 2, 4}));
  // Idempotent.
  EXPECT_EQ(summarize_availability(panel, ex).per_segment_available, summary.per_segment_available);
}

TEST(Availability, RelabelingAssetsRelabelsTheSummary) {
  ReturnsPanel panel = make_complete_panel(gaussian(4, 4, 6));
  panel.available(1, 0) = false;
  const auto ex = constant_exposures(Matrix::Ones(4, 1), 4);
  ReturnsPanel reversed = panel;
  reversed.values = panel.values.rowwise().reverse();
  reversed.available = panel.available.rowwise().reverse();
  const auto a = summarize_availability(panel, ex);
  const auto b = summarize_availability(reversed, ex);
  EXPECT_EQ(a.always_available, (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_EQ(b.always_available, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Availability, EmptyPanel) {
  const ReturnsPanel panel = make_complete_panel(Matrix(0, 3));
  ExposureSeries ex;
  const auto summary = summarize_availability(panel, ex);
  EXPECT_TRUE(summary.always_available.empty());
  EXPECT_TRUE(summary.per_segment_available.empty());
}

TEST(RoundTrip, WriteThenLoadIsBitExact) {
  ReturnsPanel panel = make_complete_panel(gaussian(7, 4, 7) * 1e-3);
  panel.available(2, 1) = false;
  panel.values(2, 1) = 0.0;
  panel.values(0, 0) = 1.0 / 3.0;
  panel.values(1, 0) = -4.9e-324;
  std::stringstream buf;
  write_returns(buf, panel);
  const ReturnsPanel back = load_returns(buf);
  EXPECT_EQ(back.times, panel.times);
  EXPECT_EQ(back.assets, panel.assets);
  EXPECT_TRUE(back.available == panel.available);
  EXPECT_TRUE(back.values == panel.values);

  std::vector<Matrix> per_time(7, gaussian(4, 2, 8));
  for (std::size_t t = 4; t < 7; ++t) per_time[t] = gaussian(4, 2, 9);
  const auto ex = exposures_from_timepoints(per_time, {"size", "value"});
  std::stringstream ebuf;
  write_exposures(ebuf, panel, ex);
  const auto ex_back = load_exposures(ebuf, panel);
  EXPECT_EQ(ex_back.change_points, ex.change_points);
  EXPECT_EQ(ex_back.factor_ids, ex.factor_ids);
  for (std::size_t s = 0; s < ex.segments(); ++s) EXPECT_TRUE(ex_back.matrices[s] == ex.matrices[s]);
}

TEST(Dates, IsoValidation) {
  EXPECT_TRUE(is_iso_date("2024-02-29"));
  EXPECT_FALSE(is_iso_date("2023-02-29"));
  EXPECT_FALSE(is_iso_date("2024-1-02"));
  EXPECT_TRUE(is_iso_date("2024-01-02T09:30:00"));
}
