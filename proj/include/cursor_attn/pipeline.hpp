#pragma once

// Turns cleaned sessions into model-ready datasets for either the
// time-series or a visual representation.

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "cursor_attn/error.hpp"
#include "cursor_attn/image.hpp"
#include "cursor_attn/nn.hpp"
#include "cursor_attn/parallel.hpp"
#include "cursor_attn/raster.hpp"
#include "cursor_attn/session.hpp"
#include "cursor_attn/timeseries.hpp"
#include "cursor_attn/trainer.hpp"

namespace cursor_attn {

inline constexpr int kConvDownscale = 10;  // 1280x900 -> 128x90

// "timeseries" or a style tag such as "traj-color" / "heatmap-ad".
struct Representation {
  std::optional<RenderStyle> style;  // empty = time series

  bool is_timeseries() const { return !style.has_value(); }
  std::string name() const { return style ? style_tag(*style) : "timeseries"; }

  static Representation parse(std::string_view text, bool with_ad = false) {
    if (text == "timeseries") {
      if (with_ad) fail(ErrorKind::InvalidValue, "the time series has no ad placeholder variant");
      return {};
    }
    if (text.size() > 3 && text.substr(text.size() - 3) == "-ad") {
      text.remove_suffix(3);
      with_ad = true;
    }
    const auto kind = parse_style(text);
    if (!kind) fail(ErrorKind::InvalidValue, "unknown representation '" + std::string(text) + "'");
    return {RenderStyle{*kind, with_ad}};
  }
};

// Convnet input: the 128x90 area average as ink density, 1 - v, so the
// white background is zero and strokes carry the signal.
inline std::vector<double> conv_input(const ImageBuffer& render) {
  auto x = downscale_to_unit(render, kConvDownscale);
  for (auto& v : x) v = 1.0 - v;
  return x;
}

inline InputShape input_shape_for(const Representation& r) {
  if (r.is_timeseries()) return InputShape::sequence(static_cast<int>(kSeriesLength), static_cast<int>(kSeriesFeatures));
  return InputShape::image(kCanvasHeight / kConvDownscale, kCanvasWidth / kConvDownscale, 3);
}

inline void check_combination(Arch arch, const Representation& r) {
  if (is_recurrent(arch) != r.is_timeseries())
    fail(ErrorKind::InvalidValue, std::string(arch_name(arch)) + " cannot be trained on the " + r.name() +
                                      " representation");
}

inline std::vector<double> encode_for_model(const LabeledSession& s, const Representation& r) {
  if (r.is_timeseries()) {
    const auto ts = encode_timeseries(s);
    return {ts.matrix.begin(), ts.matrix.end()};
  }
  return conv_input(render_session(s.session, *r.style));
}

inline Dataset build_dataset(std::span<const LabeledSession> sessions, const Representation& r, int jobs = 1) {
  Dataset d;
  d.inputs.resize(sessions.size());
  parallel_for(sessions.size(), jobs, [&](std::size_t i) { d.inputs[i] = encode_for_model(sessions[i], r); });
  for (const auto& s : sessions) {
    d.labels.push_back(s.label);
    d.ids.push_back(s.session.session_id);
  }
  return d;
}

}  // namespace cursor_attn
