#pragma once

// Visual encodings of a session: Gaussian heatmap and four trajectory
// variants, optionally over an ad placeholder, on a fixed 1280x900 canvas.
// All rasterization is hard-edged so output is pixel-exact.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cursor_attn/error.hpp"
#include "cursor_attn/image.hpp"
#include "cursor_attn/session.hpp"

namespace cursor_attn {

enum class StyleKind { Heatmap, Trajectory, TrajectoryColor, TrajectoryThickness, TrajectoryColorThickness };

inline constexpr std::array<StyleKind, 5> kAllStyleKinds{StyleKind::Heatmap, StyleKind::Trajectory,
                                                         StyleKind::TrajectoryColor, StyleKind::TrajectoryThickness,
                                                         StyleKind::TrajectoryColorThickness};

struct RenderStyle {
  StyleKind kind = StyleKind::Trajectory;
  bool with_ad_placeholder = false;

  bool uses_color() const {
    return kind == StyleKind::TrajectoryColor || kind == StyleKind::TrajectoryColorThickness;
  }
  bool uses_thickness() const {
    return kind == StyleKind::TrajectoryThickness || kind == StyleKind::TrajectoryColorThickness;
  }
  bool operator==(const RenderStyle&) const = default;
};

inline std::string_view style_name(StyleKind kind) {
  switch (kind) {
    case StyleKind::Heatmap: return "heatmap";
    case StyleKind::Trajectory: return "traj";
    case StyleKind::TrajectoryColor: return "traj-color";
    case StyleKind::TrajectoryThickness: return "traj-thick";
    case StyleKind::TrajectoryColorThickness: return "traj-color-thick";
  }
  return "traj";
}

inline std::optional<StyleKind> parse_style(std::string_view name) {
  for (StyleKind k : kAllStyleKinds)
    if (style_name(k) == name) return k;
  return std::nullopt;
}

// "{style}" or "{style}-ad"
inline std::string style_tag(const RenderStyle& style) {
  std::string tag(style_name(style.kind));
  if (style.with_ad_placeholder) tag += "-ad";
  return tag;
}

struct CanvasPoint {
  int x = 0;
  int y = 0;
  std::int64_t t_ms = 0;
  bool operator==(const CanvasPoint&) const = default;
};

// ---------------------------------------------------------------------------
// Projection

// x scaled to the 1280 px design width (round half up), y clamped; both
// clamped into the canvas.
inline int project_x(int x_px, int viewport_w) {
  const std::int64_t num = 2LL * x_px * kCanvasWidth + viewport_w;
  const std::int64_t x = num / (2LL * viewport_w);
  return static_cast<int>(std::clamp<std::int64_t>(x, 0, kCanvasWidth - 1));
}

inline int project_y(int y_px) { return std::clamp(y_px, 0, kCanvasHeight - 1); }

inline std::vector<CanvasPoint> project_to_canvas(const Session& s) {
  if (s.viewport_w <= 0) fail(ErrorKind::InvalidValue, "viewport width must be positive");
  std::vector<CanvasPoint> out;
  for (const auto& e : s.events)
    if (e.is_move()) out.push_back({project_x(e.x_px, s.viewport_w), project_y(e.y_px), e.t_ms});
  return out;
}

inline std::vector<CanvasPoint> project_to_canvas(const LabeledSession& ls) { return project_to_canvas(ls.session); }

// Canvas-space half-open rectangle [x0, x1) x [y0, y1).
struct CanvasRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool empty() const { return x1 <= x0 || y1 <= y0; }
  bool operator==(const CanvasRect&) const = default;
};

inline CanvasRect project_rect(const Rect& r, int viewport_w) {
  auto scale = [&](int x) {
    const std::int64_t num = 2LL * x * kCanvasWidth + viewport_w;
    return static_cast<int>(std::clamp<std::int64_t>(num / (2LL * viewport_w), 0, kCanvasWidth));
  };
  return {scale(r.x), std::clamp(r.y, 0, kCanvasHeight), scale(r.x + r.w), std::clamp(r.y + r.h, 0, kCanvasHeight)};
}

// ---------------------------------------------------------------------------
// Heatmap

inline constexpr int kHeatRadius = 25;
inline constexpr double kHeatSigma = kHeatRadius / 3.0;
// Kernel values are accumulated as integers scaled by 2^32, which makes
// the field exactly additive and independent of accumulation order.
inline constexpr double kHeatScale = 4294967296.0;

class HeatField {
 public:
  HeatField() : ticks_(static_cast<std::size_t>(kCanvasWidth) * kCanvasHeight, 0) {}

  double value(int x, int y) const { return static_cast<double>(ticks(x, y)) / kHeatScale; }
  std::uint64_t ticks(int x, int y) const { return ticks_[index(x, y)]; }
  void add_ticks(int x, int y, std::uint64_t t) { ticks_[index(x, y)] += t; }
  const std::vector<std::uint64_t>& raw() const { return ticks_; }

  std::uint64_t max_ticks() const { return *std::max_element(ticks_.begin(), ticks_.end()); }

  HeatField& operator+=(const HeatField& other) {
    for (std::size_t i = 0; i < ticks_.size(); ++i) ticks_[i] += other.ticks_[i];
    return *this;
  }
  bool operator==(const HeatField&) const = default;

 private:
  static std::size_t index(int x, int y) {
    return static_cast<std::size_t>(y) * kCanvasWidth + static_cast<std::size_t>(x);
  }
  std::vector<std::uint64_t> ticks_;
};

inline const std::array<std::uint64_t, (2 * kHeatRadius + 1) * (2 * kHeatRadius + 1)>& heat_kernel() {
  static const auto table = [] {
    std::array<std::uint64_t, (2 * kHeatRadius + 1) * (2 * kHeatRadius + 1)> k{};
    for (int dy = -kHeatRadius; dy <= kHeatRadius; ++dy)
      for (int dx = -kHeatRadius; dx <= kHeatRadius; ++dx) {
        const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * kHeatSigma * kHeatSigma));
        k[(dy + kHeatRadius) * (2 * kHeatRadius + 1) + (dx + kHeatRadius)] =
            static_cast<std::uint64_t>(std::llround(v * kHeatScale));
      }
    return k;
  }();
  return table;
}

inline HeatField render_heatmap(std::span<const CanvasPoint> points) {
  HeatField field;
  const auto& kernel = heat_kernel();
  for (const auto& p : points) {
    for (int dy = -kHeatRadius; dy <= kHeatRadius; ++dy) {
      const int y = p.y + dy;
      if (y < 0 || y >= kCanvasHeight) continue;
      for (int dx = -kHeatRadius; dx <= kHeatRadius; ++dx) {
        const int x = p.x + dx;
        if (x < 0 || x >= kCanvasWidth) continue;
        field.add_ticks(x, y, kernel[(dy + kHeatRadius) * (2 * kHeatRadius + 1) + (dx + kHeatRadius)]);
      }
    }
  }
  return field;
}

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

// Piecewise-linear gradient over [0, 1] with stops at 0, 1/3, 2/3, 1:
// white, blue, yellow, red. Channels round half up.
inline Rgb heat_color(double fraction) {
  static constexpr std::array<std::array<double, 3>, 4> stops{{{255, 255, 255}, {0, 0, 255}, {255, 255, 0}, {255, 0, 0}}};
  const double pos = std::clamp(fraction, 0.0, 1.0) * 3.0;
  const int seg = std::min(2, static_cast<int>(std::floor(pos)));
  const double s = pos - seg;
  const auto& a = stops[seg];
  const auto& b = stops[seg + 1];
  return {to_byte(a[0] + (b[0] - a[0]) * s), to_byte(a[1] + (b[1] - a[1]) * s), to_byte(a[2] + (b[2] - a[2]) * s)};
}

inline ImageBuffer colorize_heatfield(const HeatField& field) {
  ImageBuffer img;
  const std::uint64_t max = field.max_ticks();
  if (max == 0) return img;
  const double inv = 1.0 / static_cast<double>(max);
  for (int y = 0; y < kCanvasHeight; ++y)
    for (int x = 0; x < kCanvasWidth; ++x) {
      const std::uint64_t t = field.ticks(x, y);
      if (t != 0) img.set(x, y, heat_color(static_cast<double>(t) * inv));
    }
  return img;
}

// ---------------------------------------------------------------------------
// Trajectories

inline constexpr double kBaseStrokeWidth = 3.0;
inline constexpr double kThickStartWidth = 8.0;
inline constexpr double kThickEndWidth = 1.0;
inline constexpr int kMarkerRadius = 6;

// Time fraction of each point from recorded timestamps; falls back to the
// index fraction when the session has zero duration.
inline std::vector<double> time_fractions(std::span<const CanvasPoint> points) {
  std::vector<double> out(points.size(), 0.0);
  if (points.size() < 2) return out;
  const std::int64_t t0 = points.front().t_ms;
  const std::int64_t span = points.back().t_ms - t0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    out[i] = span > 0 ? static_cast<double>(points[i].t_ms - t0) / static_cast<double>(span)
                      : static_cast<double>(i) / static_cast<double>(points.size() - 1);
  }
  return out;
}

// Green (t = 0) to red (t = 1).
inline Rgb time_color(double t) {
  const std::uint8_t r = to_byte(255.0 * std::clamp(t, 0.0, 1.0));
  return {r, static_cast<std::uint8_t>(255 - r), 0};
}

inline double time_width(double t) {
  return kThickStartWidth + (kThickEndWidth - kThickStartWidth) * std::clamp(t, 0.0, 1.0);
}

inline void fill_circle(ImageBuffer& img, int cx, int cy, int radius, Rgb color) {
  for (int y = std::max(0, cy - radius); y <= std::min(img.height() - 1, cy + radius); ++y)
    for (int x = std::max(0, cx - radius); x <= std::min(img.width() - 1, cx + radius); ++x) {
      const int dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy <= radius * radius) img.set(x, y, color);
    }
}

// A pixel belongs to the stroke when its center lies within half the local
// width of the segment; width and color are evaluated at the time fraction
// of the closest point on the segment.
inline void draw_segment(ImageBuffer& img, const CanvasPoint& a, const CanvasPoint& b, double ta, double tb,
                         const RenderStyle& style) {
  const double max_half =
      (style.uses_thickness() ? std::max(time_width(ta), time_width(tb)) : kBaseStrokeWidth) / 2.0;
  const int pad = static_cast<int>(std::ceil(max_half));
  const int x_lo = std::max(0, std::min(a.x, b.x) - pad), x_hi = std::min(img.width() - 1, std::max(a.x, b.x) + pad);
  const int y_lo = std::max(0, std::min(a.y, b.y) - pad), y_hi = std::min(img.height() - 1, std::max(a.y, b.y) + pad);
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      const double qx = x - a.x, qy = y - a.y;
      const double u = len2 > 0.0 ? std::clamp((qx * dx + qy * dy) / len2, 0.0, 1.0) : 0.0;
      const double ex = qx - u * dx, ey = qy - u * dy;
      const double t = ta + u * (tb - ta);
      const double half = (style.uses_thickness() ? time_width(t) : kBaseStrokeWidth) / 2.0;
      if (ex * ex + ey * ey <= half * half) img.set(x, y, style.uses_color() ? time_color(t) : kBlack);
    }
  }
}

// Draws polyline and start/end markers onto an existing canvas.
inline void draw_trajectory(ImageBuffer& img, std::span<const CanvasPoint> points, const RenderStyle& style) {
  if (points.empty()) fail(ErrorKind::InvalidValue, "trajectory needs at least one point");
  if (style.kind == StyleKind::Heatmap) fail(ErrorKind::InvalidValue, "heatmap is not a trajectory style");
  const auto frac = time_fractions(points);
  for (std::size_t i = 0; i + 1 < points.size(); ++i) draw_segment(img, points[i], points[i + 1], frac[i], frac[i + 1], style);
  fill_circle(img, points.front().x, points.front().y, kMarkerRadius, kGreen);
  fill_circle(img, points.back().x, points.back().y, kMarkerRadius, kRed);
}

inline ImageBuffer render_trajectory(std::span<const CanvasPoint> points, const RenderStyle& style) {
  ImageBuffer img;
  draw_trajectory(img, points, style);
  return img;
}

// ---------------------------------------------------------------------------
// Ad placeholder

inline constexpr Rgb kPlaceholderGray{128, 128, 128};
inline constexpr int kPlaceholderBorder = 2;

// 50% blend of the existing pixel with gray, rounding half up; the
// innermost 2 px ring of the rectangle is black.
inline ImageBuffer overlay_ad_placeholder(ImageBuffer image, const Rect& ad_box, int viewport_w) {
  const CanvasRect r = project_rect(ad_box, viewport_w);
  if (r.empty()) return image;
  for (int y = r.y0; y < r.y1; ++y)
    for (int x = r.x0; x < r.x1; ++x) {
      const bool border = x < r.x0 + kPlaceholderBorder || x >= r.x1 - kPlaceholderBorder ||
                          y < r.y0 + kPlaceholderBorder || y >= r.y1 - kPlaceholderBorder;
      if (border) {
        image.set(x, y, kBlack);
      } else {
        const Rgb c = image.at(x, y);
        image.set(x, y,
                  {static_cast<std::uint8_t>((c.r + kPlaceholderGray.r + 1) / 2),
                   static_cast<std::uint8_t>((c.g + kPlaceholderGray.g + 1) / 2),
                   static_cast<std::uint8_t>((c.b + kPlaceholderGray.b + 1) / 2)});
      }
    }
  return image;
}

// Multiplies `layer` onto `base`; a white layer leaves base unchanged.
inline void multiply_onto(ImageBuffer& base, const ImageBuffer& layer) {
  auto& dst = base.rgba();
  const auto& src = layer.rgba();
  for (std::size_t i = 0; i < dst.size(); i += 4)
    for (std::size_t c = 0; c < 3; ++c) dst[i + c] = static_cast<std::uint8_t>((dst[i + c] * src[i + c] + 127) / 255);
}

// Full pipeline for one session and style: placeholder first, then heat or
// strokes on top.
inline ImageBuffer render_session(const Session& s, const RenderStyle& style) {
  const auto points = project_to_canvas(s);
  ImageBuffer canvas;
  if (style.with_ad_placeholder) {
    if (!s.ad_box) fail(ErrorKind::MissingAdBox, "session " + s.session_id + " has no ad_box");
    canvas = overlay_ad_placeholder(std::move(canvas), *s.ad_box, s.viewport_w);
  }
  if (style.kind == StyleKind::Heatmap) {
    const ImageBuffer heat = colorize_heatfield(render_heatmap(points));
    if (!style.with_ad_placeholder) return heat;
    multiply_onto(canvas, heat);
    return canvas;
  }
  draw_trajectory(canvas, points, style);
  return canvas;
}

inline std::string render_file_name(const std::string& session_id, const RenderStyle& style) {
  return session_id + "-" + style_tag(style) + ".png";
}

}  // namespace cursor_attn
