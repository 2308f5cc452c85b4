#pragma once

#include <array>
#include <cstddef>
#include <cstdio>
#include <ostream>
#include <span>

#include "cursor_attn/error.hpp"
#include "cursor_attn/session.hpp"

namespace cursor_attn {

inline constexpr std::size_t kSeriesLength = 50;
inline constexpr std::size_t kSeriesFeatures = 2;
inline constexpr double kDesignCanvasHeight = 900.0;

// Fixed-length 50x2 coordinate matrix, row-major (x_norm, y_scaled) per
// timestep. Rows at or beyond valid_len are zero.
struct TimeSeriesSample {
  std::array<double, kSeriesLength * kSeriesFeatures> matrix{};
  std::size_t valid_len = 0;
  int label = 0;

  double x(std::size_t row) const { return matrix[row * kSeriesFeatures]; }
  double y(std::size_t row) const { return matrix[row * kSeriesFeatures + 1]; }
  std::span<const double> values() const { return matrix; }
};

// First min(n, 50) mousemove coordinates; x divided by the viewport width,
// y by the design canvas height, zero post-padding.
inline TimeSeriesSample encode_timeseries(const LabeledSession& ls) {
  const Session& s = ls.session;
  if (s.viewport_w <= 0) fail(ErrorKind::InvalidValue, "viewport width must be positive");
  TimeSeriesSample out;
  out.label = ls.label;
  const double inv_w = 1.0 / static_cast<double>(s.viewport_w);
  std::size_t row = 0;
  for (const auto& e : s.events) {
    if (!e.is_move()) continue;
    if (row == kSeriesLength) break;
    out.matrix[row * kSeriesFeatures] = static_cast<double>(e.x_px) * inv_w;
    out.matrix[row * kSeriesFeatures + 1] = static_cast<double>(e.y_px) / kDesignCanvasHeight;
    ++row;
  }
  out.valid_len = row;
  return out;
}

inline void write_timeseries_csv_header(std::ostream& out) {
  for (std::size_t i = 1; i <= kSeriesLength; ++i) out << 'x' << i << ",y" << i << ',';
  out << "label\n";
}

// One row of 100 reals plus the label, shortest round-trip formatting.
inline void write_timeseries_csv_row(std::ostream& out, const TimeSeriesSample& sample) {
  char buf[32];
  for (double v : sample.matrix) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf << ',';
  }
  out << sample.label << '\n';
}

}  // namespace cursor_attn
