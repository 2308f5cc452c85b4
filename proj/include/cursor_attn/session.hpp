#pragma once

// Session data model, log parsing, cleaning and stratified splitting.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cursor_attn/error.hpp"
#include "cursor_attn/rng.hpp"

namespace cursor_attn {

using json = nlohmann::json;

inline constexpr std::string_view kMouseMove = "mousemove";
inline constexpr int kMinMouseCoordinates = 5;

enum class AdFormat { Organic, DdLeft, DdRight };

inline std::string_view to_string(AdFormat f) {
  switch (f) {
    case AdFormat::Organic: return "organic";
    case AdFormat::DdLeft: return "dd_left";
    case AdFormat::DdRight: return "dd_right";
  }
  return "organic";
}

inline std::optional<AdFormat> parse_ad_format(std::string_view s) {
  if (s == "organic") return AdFormat::Organic;
  if (s == "dd_left") return AdFormat::DdLeft;
  if (s == "dd_right") return AdFormat::DdRight;
  return std::nullopt;
}

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  bool operator==(const Rect&) const = default;
};

struct RawEvent {
  std::int64_t t_ms = 0;
  int x_px = 0;
  int y_px = 0;
  std::string event_name;
  std::string xpath;

  bool is_move() const { return event_name == kMouseMove; }
  bool operator==(const RawEvent&) const = default;
};

struct Session {
  std::string session_id;
  AdFormat ad_format = AdFormat::Organic;
  int viewport_w = 0;
  int viewport_h = 0;
  std::optional<Rect> ad_box;
  int likert = 3;
  std::vector<RawEvent> events;

  bool operator==(const Session&) const = default;

  std::size_t move_count() const {
    return static_cast<std::size_t>(
        std::count_if(events.begin(), events.end(), [](const RawEvent& e) { return e.is_move(); }));
  }
};

struct LabeledSession {
  Session session;
  int label = 0;  // 0 = ignored, 1 = attended

  bool operator==(const LabeledSession&) const = default;
};

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {

inline const json& require(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(ErrorKind::MalformedInput, std::string("missing required field '") + key + "'");
  return *it;
}

inline std::int64_t require_int(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_number_integer()) fail(ErrorKind::MalformedInput, std::string("field '") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

inline std::string require_string(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_string()) fail(ErrorKind::MalformedInput, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

inline int checked_int(std::int64_t v, const char* what) {
  if (v < INT32_MIN || v > INT32_MAX) fail(ErrorKind::InvalidValue, std::string(what) + " out of range");
  return static_cast<int>(v);
}

}  // namespace detail

inline void validate(const Session& s) {
  if (s.viewport_w <= 0 || s.viewport_h <= 0)
    fail(ErrorKind::InvalidValue, "viewport dimensions must be positive");
  if (s.ad_box && (s.ad_box->w <= 0 || s.ad_box->h <= 0))
    fail(ErrorKind::InvalidValue, "ad_box must have positive width and height");
  if (s.likert < 1 || s.likert > 5) fail(ErrorKind::InvalidValue, "likert must be in 1..5, got " + std::to_string(s.likert));
  for (const auto& e : s.events) {
    if (e.t_ms < 0) fail(ErrorKind::InvalidValue, "negative event timestamp");
    if (e.x_px < 0 || e.y_px < 0) fail(ErrorKind::InvalidValue, "negative event coordinate");
  }
}

// Builds a Session from a parsed JSON object. Unknown keys are ignored;
// events are stably sorted by timestamp.
inline Session session_from_json(const json& doc) {
  using namespace detail;
  if (!doc.is_object()) fail(ErrorKind::MalformedInput, "session document must be a JSON object");
  Session s;
  s.session_id = require_string(doc, "session_id");
  const auto fmt = parse_ad_format(require_string(doc, "ad_format"));
  if (!fmt) fail(ErrorKind::InvalidValue, "unknown ad_format");
  s.ad_format = *fmt;

  const json& vp = require(doc, "viewport");
  if (!vp.is_object()) fail(ErrorKind::MalformedInput, "viewport must be an object");
  s.viewport_w = checked_int(require_int(vp, "w"), "viewport.w");
  s.viewport_h = checked_int(require_int(vp, "h"), "viewport.h");

  if (auto it = doc.find("ad_box"); it != doc.end() && !it->is_null()) {
    if (!it->is_object()) fail(ErrorKind::MalformedInput, "ad_box must be an object");
    s.ad_box = Rect{checked_int(require_int(*it, "x"), "ad_box.x"), checked_int(require_int(*it, "y"), "ad_box.y"),
                    checked_int(require_int(*it, "w"), "ad_box.w"), checked_int(require_int(*it, "h"), "ad_box.h")};
  }
  s.likert = checked_int(require_int(doc, "likert"), "likert");

  const json& events = require(doc, "events");
  if (!events.is_array()) fail(ErrorKind::MalformedInput, "events must be an array");
  s.events.reserve(events.size());
  for (const json& ev : events) {
    if (!ev.is_object()) fail(ErrorKind::MalformedInput, "event must be an object");
    RawEvent e;
    e.t_ms = require_int(ev, "t");
    e.x_px = checked_int(require_int(ev, "x"), "event.x");
    e.y_px = checked_int(require_int(ev, "y"), "event.y");
    e.event_name = require_string(ev, "ev");
    if (auto xp = ev.find("xpath"); xp != ev.end() && xp->is_string()) e.xpath = xp->get<std::string>();
    s.events.push_back(std::move(e));
  }
  std::stable_sort(s.events.begin(), s.events.end(),
                   [](const RawEvent& a, const RawEvent& b) { return a.t_ms < b.t_ms; });
  validate(s);
  return s;
}

inline Session parse_session_log(std::string_view bytes) {
  json doc = json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (doc.is_discarded()) fail(ErrorKind::MalformedInput, "not valid JSON");
  return session_from_json(doc);
}

inline json to_json(const Session& s) {
  json doc;
  doc["session_id"] = s.session_id;
  doc["ad_format"] = std::string(to_string(s.ad_format));
  doc["viewport"] = {{"w", s.viewport_w}, {"h", s.viewport_h}};
  if (s.ad_box) doc["ad_box"] = {{"x", s.ad_box->x}, {"y", s.ad_box->y}, {"w", s.ad_box->w}, {"h", s.ad_box->h}};
  doc["likert"] = s.likert;
  json events = json::array();
  for (const auto& e : s.events)
    events.push_back({{"t", e.t_ms}, {"x", e.x_px}, {"y", e.y_px}, {"ev", e.event_name}, {"xpath", e.xpath}});
  doc["events"] = std::move(events);
  return doc;
}

inline json to_json(const LabeledSession& ls) {
  json doc = to_json(ls.session);
  doc["label"] = ls.label;
  return doc;
}

inline LabeledSession labeled_from_json(const json& doc) {
  LabeledSession ls;
  ls.session = session_from_json(doc);
  const std::int64_t label = detail::require_int(doc, "label");
  if (label != 0 && label != 1) fail(ErrorKind::InvalidValue, "label must be 0 or 1");
  ls.label = static_cast<int>(label);
  return ls;
}

// Reads a JSON Lines dataset. Blank lines are skipped; errors carry the
// 1-based line number.
inline std::vector<LabeledSession> read_dataset(std::istream& in) {
  std::vector<LabeledSession> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json doc = json::parse(line, nullptr, false);
      if (doc.is_discarded()) fail(ErrorKind::MalformedInput, "not valid JSON");
      out.push_back(labeled_from_json(doc));
    } catch (const Error& e) {
      fail(e.kind(), "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline void write_dataset(std::ostream& out, std::span<const LabeledSession> sessions) {
  for (const auto& s : sessions) out << to_json(s).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Labeling and cleaning

// 1,2 -> 0; 4,5 -> 1; 3 -> no label.
inline std::optional<int> binarize_label(int likert) {
  if (likert < 1 || likert > 5) fail(ErrorKind::InvalidValue, "likert must be in 1..5, got " + std::to_string(likert));
  if (likert <= 2) return 0;
  if (likert >= 4) return 1;
  return std::nullopt;
}

// Collapses consecutive identical mousemove coordinates. Other events pass
// through untouched and do not break adjacency between moves.
inline Session dedup_moves(const Session& s) {
  Session out = s;
  out.events.clear();
  out.events.reserve(s.events.size());
  const RawEvent* last_move = nullptr;
  for (const auto& e : s.events) {
    if (e.is_move()) {
      if (last_move && last_move->x_px == e.x_px && last_move->y_px == e.y_px) continue;
      out.events.push_back(e);
      last_move = &e;
    } else {
      out.events.push_back(e);
    }
  }
  return out;
}

struct CleaningSummary {
  std::size_t kept = 0;
  std::size_t dropped_short = 0;
  std::size_t dropped_neutral = 0;
  std::size_t positives = 0;
};

inline std::vector<LabeledSession> clean_sessions(std::span<const Session> sessions,
                                                  CleaningSummary* summary = nullptr,
                                                  int min_coordinates = kMinMouseCoordinates) {
  CleaningSummary local;
  std::vector<LabeledSession> out;
  for (const auto& s : sessions) {
    const auto label = binarize_label(s.likert);
    if (!label) {
      ++local.dropped_neutral;
      continue;
    }
    Session cleaned = dedup_moves(s);
    if (cleaned.move_count() < static_cast<std::size_t>(min_coordinates)) {
      ++local.dropped_short;
      continue;
    }
    ++local.kept;
    local.positives += static_cast<std::size_t>(*label);
    out.push_back({std::move(cleaned), *label});
  }
  if (summary) *summary = local;
  return out;
}

// ---------------------------------------------------------------------------
// Stratified splitting

using SplitRatios = std::array<double, 3>;

struct SplitIndices {
  std::array<std::vector<std::size_t>, 3> parts;  // train, val, test
};

struct DatasetSplit {
  std::vector<LabeledSession> train;
  std::vector<LabeledSession> val;
  std::vector<LabeledSession> test;
  std::uint64_t seed = 0;
  SplitRatios ratios{};
};

namespace detail {

// Largest-remainder apportionment of `total` by real quotas; ties go to
// the earlier part.
inline std::array<std::size_t, 3> apportion(std::size_t total, const std::array<double, 3>& quotas) {
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> rema{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double q = quotas[i];
    const double fl = std::floor(q + 1e-9);
    sizes[i] = static_cast<std::size_t>(fl);
    rema[i] = q - fl;
    assigned += sizes[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rema[a] > rema[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++sizes[order[k % 3]];
  return sizes;
}

}  // namespace detail

inline void validate_ratios(const SplitRatios& ratios) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0) || r > 1.0) fail(ErrorKind::InvalidValue, "split ratios must lie in [0, 1]");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorKind::InvalidValue, "split ratios must sum to 1");
}

// Core of the stratified split over binary labels. Split sizes are
// apportioned over the whole set, then each split's positive count is
// apportioned exactly (integer quotas size*P/N). Each class is shuffled
// with its own derived stream and allocated contiguously. Output indices
// within a part are sorted ascending.
inline SplitIndices stratified_split_indices(std::span<const int> labels, const SplitRatios& ratios,
                                             std::uint64_t seed) {
  validate_ratios(ratios);
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) fail(ErrorKind::InvalidValue, "labels must be binary");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty()) fail(ErrorKind::EmptyClass, "each class needs at least one session");

  const std::size_t n = labels.size();
  const std::size_t n_pos = by_class[1].size();
  const auto sizes = detail::apportion(
      n, {static_cast<double>(n) * ratios[0], static_cast<double>(n) * ratios[1], static_cast<double>(n) * ratios[2]});

  // Positive quotas are exact rationals sizes[i]*P/N; fractional parts are
  // compared through their integer remainders.
  std::array<std::size_t, 3> pos{};
  std::array<std::size_t, 3> rem{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    pos[i] = sizes[i] * n_pos / n;
    rem[i] = sizes[i] * n_pos % n;
    assigned += pos[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < n_pos; ++k, ++assigned) ++pos[order[k % 3]];

  SplitIndices out;
  for (int cls = 0; cls < 2; ++cls) {
    auto members = by_class[cls];
    Rng rng(derive_seed(seed, "stratified_split", static_cast<std::uint64_t>(cls)));
    rng.shuffle(members);
    std::size_t cursor = 0;
    for (int part = 0; part < 3; ++part) {
      const std::size_t take = cls == 1 ? pos[part] : sizes[part] - pos[part];
      for (std::size_t k = 0; k < take; ++k) out.parts[part].push_back(members[cursor++]);
    }
  }
  for (auto& p : out.parts) std::sort(p.begin(), p.end());
  return out;
}

inline DatasetSplit stratified_split(std::span<const LabeledSession> sessions, const SplitRatios& ratios,
                                     std::uint64_t seed) {
  std::vector<int> labels;
  labels.reserve(sessions.size());
  for (const auto& s : sessions) labels.push_back(s.label);
  const auto idx = stratified_split_indices(labels, ratios, seed);
  DatasetSplit split;
  split.seed = seed;
  split.ratios = ratios;
  for (auto i : idx.parts[0]) split.train.push_back(sessions[i]);
  for (auto i : idx.parts[1]) split.val.push_back(sessions[i]);
  for (auto i : idx.parts[2]) split.test.push_back(sessions[i]);
  return split;
}

// Splits each ad format independently and concatenates the parts.
inline DatasetSplit stratified_split_by_format(std::span<const LabeledSession> sessions, const SplitRatios& ratios,
                                               std::uint64_t seed) {
  DatasetSplit merged;
  merged.seed = seed;
  merged.ratios = ratios;
  for (AdFormat fmt : {AdFormat::Organic, AdFormat::DdLeft, AdFormat::DdRight}) {
    std::vector<LabeledSession> group;
    for (const auto& s : sessions)
      if (s.session.ad_format == fmt) group.push_back(s);
    if (group.empty()) continue;
    auto part = stratified_split(group, ratios, derive_seed(seed, to_string(fmt)));
    merged.train.insert(merged.train.end(), part.train.begin(), part.train.end());
    merged.val.insert(merged.val.end(), part.val.begin(), part.val.end());
    merged.test.insert(merged.test.end(), part.test.begin(), part.test.end());
  }
  return merged;
}

// Mousemove events of a session in temporal order.
inline std::vector<RawEvent> mouse_moves(const Session& s) {
  std::vector<RawEvent> out;
  for (const auto& e : s.events)
    if (e.is_move()) out.push_back(e);
  return out;
}

}  // namespace cursor_attn
