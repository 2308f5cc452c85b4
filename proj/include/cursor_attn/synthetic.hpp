#pragma once

// Synthetic interaction corpus with a known attention signal: attended
// sessions dwell inside the ad box, ignored sessions keep away from it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cursor_attn/rng.hpp"
#include "cursor_attn/session.hpp"

namespace cursor_attn {

struct SyntheticOptions {
  int sessions = 500;
  double positive_fraction = 0.5;
  double noise_px = 4.0;
  std::uint64_t seed = 0;
  // Design-width (1280 px) ad rectangle; scaled to each viewport.
  Rect ad_box{160, 150, 480, 140};
};

namespace synth_detail {

struct Pt {
  double x, y;
};

inline bool inside(const Pt& p, const Rect& r, double margin = 0.0) {
  return p.x >= r.x - margin && p.x <= r.x + r.w + margin && p.y >= r.y - margin && p.y <= r.y + r.h + margin;
}

inline bool segment_clear(const Pt& a, const Pt& b, const Rect& r, double margin) {
  for (int i = 0; i <= 40; ++i) {
    const double u = i / 40.0;
    if (inside({a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)}, r, margin)) return false;
  }
  return true;
}

inline void walk(std::vector<Pt>& path, const Pt& to, int steps, Rng& rng) {
  const Pt from = path.back();
  for (int i = 1; i <= steps; ++i) {
    const double u = static_cast<double>(i) / steps;
    const double ease = u * u * (3.0 - 2.0 * u);
    path.push_back({from.x + ease * (to.x - from.x) + rng.normal() * 2.0, from.y + ease * (to.y - from.y) + rng.normal() * 2.0});
  }
}

inline Pt random_page_point(Rng& rng) { return {rng.uniform(40.0, 1240.0), rng.uniform(40.0, 860.0)}; }

inline Pt random_clear_point(const Rect& box, Rng& rng) {
  for (;;) {
    const Pt p = random_page_point(rng);
    if (!inside(p, box, 60.0)) return p;
  }
}

// Approach, dwell with a tight random walk inside the box, then leave.
inline std::vector<Pt> attended_path(const Rect& box, Rng& rng) {
  std::vector<Pt> path{random_clear_point(box, rng)};
  Pt anchor{rng.uniform(box.x + 40.0, box.x + box.w - 40.0), rng.uniform(box.y + 30.0, box.y + box.h - 30.0)};
  walk(path, anchor, 4 + static_cast<int>(rng.below(5)), rng);
  const int dwell = 14 + static_cast<int>(rng.below(12));
  Pt cur = anchor;
  for (int i = 0; i < dwell; ++i) {
    cur.x = std::clamp(cur.x + rng.normal() * 12.0, box.x + 10.0, box.x + box.w - 10.0);
    cur.y = std::clamp(cur.y + rng.normal() * 10.0, box.y + 10.0, box.y + box.h - 10.0);
    path.push_back(cur);
  }
  walk(path, random_clear_point(box, rng), 4 + static_cast<int>(rng.below(6)), rng);
  return path;
}

// Wander through waypoints whose connecting segments avoid the box.
inline std::vector<Pt> ignoring_path(const Rect& box, Rng& rng) {
  std::vector<Pt> path{random_clear_point(box, rng)};
  const int waypoints = 3 + static_cast<int>(rng.below(4));
  for (int w = 0; w < waypoints; ++w) {
    Pt next;
    int attempts = 0;
    do {
      next = random_clear_point(box, rng);
    } while (!segment_clear(path.back(), next, box, 40.0) && ++attempts < 200);
    if (attempts >= 200) break;
    walk(path, next, 5 + static_cast<int>(rng.below(6)), rng);
  }
  return path;
}

}  // namespace synth_detail

inline Session synthesize_session(const SyntheticOptions& opt, int index, bool attended) {
  using namespace synth_detail;
  Rng rng(derive_seed(opt.seed, "synthetic_session", static_cast<std::uint64_t>(index)));
  static constexpr int kWidths[] = {1280, 1366, 1440, 1600, 1920};
  const int vw = kWidths[rng.below(5)];
  const double sx = static_cast<double>(vw) / 1280.0;

  Session s;
  s.session_id = "syn-" + std::to_string(index);
  s.ad_format = AdFormat::Organic;
  s.viewport_w = vw;
  s.viewport_h = 900;
  s.ad_box = Rect{static_cast<int>(std::lround(opt.ad_box.x * sx)), opt.ad_box.y,
                  static_cast<int>(std::lround(opt.ad_box.w * sx)), opt.ad_box.h};
  s.likert = attended ? 4 + static_cast<int>(rng.below(2)) : 1 + static_cast<int>(rng.below(2));

  const auto path = attended ? attended_path(opt.ad_box, rng) : ignoring_path(opt.ad_box, rng);
  std::int64_t t = 0;
  s.events.push_back({0, 0, 0, "load", ""});
  for (const auto& p : path) {
    t += 100 + static_cast<std::int64_t>(rng.below(101));
    const double x = std::max(0.0, (p.x + rng.normal() * opt.noise_px) * sx);
    const double y = std::max(0.0, p.y + rng.normal() * opt.noise_px);
    s.events.push_back({t, static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y)), std::string(kMouseMove),
                        "/html/body"});
  }
  const auto& last = s.events.back();
  s.events.push_back({t + 50, last.x_px, last.y_px, "click", "/html/body/div"});
  return s;
}

// Attended sessions are spread evenly through the corpus.
inline std::vector<Session> synthesize_corpus(const SyntheticOptions& opt) {
  std::vector<Session> out;
  out.reserve(static_cast<std::size_t>(opt.sessions));
  for (int i = 0; i < opt.sessions; ++i) {
    const bool attended = std::floor((i + 1) * opt.positive_fraction) > std::floor(i * opt.positive_fraction);
    out.push_back(synthesize_session(opt, i, attended));
  }
  return out;
}

}  // namespace cursor_attn
