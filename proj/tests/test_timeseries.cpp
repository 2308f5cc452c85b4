#include <gtest/gtest.h>

#include <sstream>

#include "cursor_attn/rng.hpp"
#include "cursor_attn/timeseries.hpp"

using namespace cursor_attn;

namespace {

LabeledSession with_moves(const std::vector<std::pair<int, int>>& xy, int viewport_w = 1280) {
  LabeledSession ls;
  ls.session.session_id = "t";
  ls.session.viewport_w = viewport_w;
  ls.session.viewport_h = 900;
  std::int64_t t = 0;
  for (auto [x, y] : xy) ls.session.events.push_back({t += 5, x, y, "mousemove", ""});
  ls.label = 1;
  return ls;
}

}  // namespace

TEST(EncodeTimeseries, ThreeCoordinatesPadded) {
  const auto ts = encode_timeseries(with_moves({{640, 450}, {640, 450}, {640, 450}}));
  EXPECT_EQ(ts.valid_len, 3u);
  EXPECT_DOUBLE_EQ(ts.x(0), 0.5);
  EXPECT_DOUBLE_EQ(ts.y(0), 0.5);
  for (std::size_t r = 3; r < 50; ++r) {
    EXPECT_EQ(ts.x(r), 0.0);
    EXPECT_EQ(ts.y(r), 0.0);
  }
}

TEST(EncodeTimeseries, EightyCoordinatesTruncatedInOrder) {
  std::vector<std::pair<int, int>> xy;
  for (int i = 0; i < 80; ++i) xy.emplace_back(i, 2 * i);
  const auto ts = encode_timeseries(with_moves(xy));
  EXPECT_EQ(ts.valid_len, 50u);
  for (std::size_t r = 0; r < 50; ++r) {
    EXPECT_DOUBLE_EQ(ts.x(r), static_cast<double>(r) / 1280.0);
    EXPECT_DOUBLE_EQ(ts.y(r), 2.0 * static_cast<double>(r) / 900.0);
  }
}

TEST(EncodeTimeseries, Boundary) {
  const auto ts = encode_timeseries(with_moves({{1280, 0}}));
  EXPECT_EQ(ts.x(0), 1.0);
  EXPECT_EQ(ts.y(0), 0.0);
}

TEST(EncodeTimeseries, NonMovesSkipped) {
  auto ls = with_moves({{10, 10}, {20, 20}});
  ls.session.events.insert(ls.session.events.begin() + 1, RawEvent{6, 999, 999, "click", ""});
  const auto ts = encode_timeseries(ls);
  EXPECT_EQ(ts.valid_len, 2u);
  EXPECT_DOUBLE_EQ(ts.x(1), 20.0 / 1280.0);
}

TEST(EncodeTimeseries, ZeroViewportRejected) {
  auto ls = with_moves({{1, 1}});
  ls.session.viewport_w = 0;
  EXPECT_THROW(encode_timeseries(ls), Error);
}

TEST(EncodeTimeseries, ScaleConsistent) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int w = 200 + static_cast<int>(rng.below(2000));
    std::vector<std::pair<int, int>> xy, xy2;
    for (std::size_t i = 0; i < 1 + rng.below(70); ++i) {
      const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(w) + 1));
      const int y = static_cast<int>(rng.below(1500));
      xy.emplace_back(x, y);
      xy2.emplace_back(2 * x, y);
    }
    const auto a = encode_timeseries(with_moves(xy, w));
    const auto b = encode_timeseries(with_moves(xy2, 2 * w));
    EXPECT_EQ(a.matrix, b.matrix);
    for (std::size_t r = 0; r < a.valid_len; ++r) {
      EXPECT_GE(a.x(r), 0.0);
      EXPECT_LE(a.x(r), 1.0);
    }
  }
}

TEST(EncodeTimeseries, CsvLayout) {
  std::ostringstream out;
  write_timeseries_csv_header(out);
  write_timeseries_csv_row(out, encode_timeseries(with_moves({{640, 450}})));
  std::istringstream in(out.str());
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header.substr(0, 12), "x1,y1,x2,y2,");
  EXPECT_EQ(header.substr(header.size() - 13), "x50,y50,label");
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 100);
  EXPECT_EQ(row.substr(0, 8), "0.5,0.5,");
  EXPECT_EQ(row.back(), '1');
}
