#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "cursor_attn/rng.hpp"
#include "cursor_attn/session.hpp"

using namespace cursor_attn;

namespace {

std::string doc_with(const std::string& events, int likert = 4, const std::string& extra = "") {
  return R"({"session_id":"s1","ad_format":"dd_left","viewport":{"w":1280,"h":900},)"
         R"("ad_box":{"x":10,"y":20,"w":300,"h":250},"likert":)" +
         std::to_string(likert) + extra + R"(,"events":[)" + events + "]}";
}

std::string move(int t, int x, int y) {
  return R"({"t":)" + std::to_string(t) + R"(,"x":)" + std::to_string(x) + R"(,"y":)" + std::to_string(y) +
         R"(,"ev":"mousemove","xpath":"/html/body"})";
}

Session session_with_moves(const std::vector<std::pair<int, int>>& xy, int likert = 5, std::string id = "s") {
  Session s;
  s.session_id = std::move(id);
  s.viewport_w = 1280;
  s.viewport_h = 900;
  s.likert = likert;
  std::int64_t t = 0;
  for (auto [x, y] : xy) s.events.push_back({t += 10, x, y, "mousemove", ""});
  return s;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorKind::IOFailure;
}

}  // namespace

TEST(ParseSessionLog, ValidDocumentWithTenMoves) {
  std::string ev;
  for (int i = 0; i < 10; ++i) ev += (i ? "," : "") + move(i * 100, i, 2 * i);
  const auto s = parse_session_log(doc_with(ev));
  EXPECT_EQ(s.session_id, "s1");
  EXPECT_EQ(s.ad_format, AdFormat::DdLeft);
  EXPECT_EQ(s.viewport_w, 1280);
  ASSERT_TRUE(s.ad_box.has_value());
  EXPECT_EQ(*s.ad_box, (Rect{10, 20, 300, 250}));
  ASSERT_EQ(s.events.size(), 10u);
  for (std::size_t i = 1; i < s.events.size(); ++i) EXPECT_LE(s.events[i - 1].t_ms, s.events[i].t_ms);
}

TEST(ParseSessionLog, LikertSixIsInvalidValue) {
  EXPECT_EQ(kind_of([] { parse_session_log(doc_with(move(0, 1, 1), 6)); }), ErrorKind::InvalidValue);
}

TEST(ParseSessionLog, OutOfOrderEventsAreStablySorted) {
  // Two events share t=50; their input order must survive.
  const std::string ev = move(100, 1, 1) + "," + move(50, 2, 2) + "," +
                         R"({"t":50,"x":3,"y":3,"ev":"click","xpath":""})" + "," + move(0, 4, 4);
  const auto s = parse_session_log(doc_with(ev));
  // Reference: std::stable_sort over the fixture's (t, tag) pairs.
  std::vector<std::pair<int, int>> ref{{100, 1}, {50, 2}, {50, 3}, {0, 4}};
  std::stable_sort(ref.begin(), ref.end(), [](auto a, auto b) { return a.first < b.first; });
  ASSERT_EQ(s.events.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(s.events[i].t_ms, ref[i].first);
    EXPECT_EQ(s.events[i].x_px, ref[i].second);
  }
}

TEST(ParseSessionLog, UnknownFieldsIgnored) {
  const auto s = parse_session_log(doc_with(move(0, 1, 1), 2, R"(,"browser":"x","extra":{"a":1})"));
  EXPECT_EQ(s.likert, 2);
}

TEST(ParseSessionLog, ErrorKinds) {
  EXPECT_EQ(kind_of([] { parse_session_log("{not json"); }), ErrorKind::MalformedInput);
  EXPECT_EQ(kind_of([] { parse_session_log(R"({"session_id":"a"})"); }), ErrorKind::MalformedInput);
  EXPECT_EQ(kind_of([] { parse_session_log(doc_with(move(0, -1, 1))); }), ErrorKind::InvalidValue);
  EXPECT_EQ(kind_of([] { parse_session_log(doc_with(move(-5, 1, 1))); }), ErrorKind::InvalidValue);
  EXPECT_EQ(kind_of([] {
              parse_session_log(R"({"session_id":"a","ad_format":"organic","viewport":{"w":0,"h":900},)"
                                R"("likert":4,"events":[]})");
            }),
            ErrorKind::InvalidValue);
  EXPECT_EQ(kind_of([] {
              parse_session_log(R"({"session_id":"a","ad_format":"banner","viewport":{"w":10,"h":900},)"
                                R"("likert":4,"events":[]})");
            }),
            ErrorKind::InvalidValue);
  EXPECT_EQ(kind_of([] {
              parse_session_log(R"({"session_id":"a","ad_format":"organic","viewport":{"w":10,"h":900},)"
                                R"("ad_box":{"x":0,"y":0,"w":0,"h":5},"likert":4,"events":[]})");
            }),
            ErrorKind::InvalidValue);
}

TEST(ParseSessionLog, JsonRoundTrip) {
  const auto s = parse_session_log(doc_with(move(0, 1, 1) + "," + move(5, 2, 9)));
  EXPECT_EQ(session_from_json(to_json(s)), s);
}

TEST(Dataset, ReadWriteRoundTripAndLineNumbers) {
  std::vector<LabeledSession> data{{session_with_moves({{1, 2}, {3, 4}}, 5, "a"), 1},
                                   {session_with_moves({{5, 6}}, 1, "b"), 0}};
  std::ostringstream out;
  write_dataset(out, data);
  std::istringstream in(out.str() + "\n");
  EXPECT_EQ(read_dataset(in), data);

  std::istringstream bad(out.str() + "{oops\n");
  try {
    read_dataset(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MalformedInput);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(BinarizeLabel, Mapping) {
  EXPECT_EQ(binarize_label(5), 1);
  EXPECT_EQ(binarize_label(4), 1);
  EXPECT_EQ(binarize_label(1), 0);
  EXPECT_EQ(binarize_label(2), 0);
  EXPECT_FALSE(binarize_label(3).has_value());
  EXPECT_EQ(kind_of([] { binarize_label(0); }), ErrorKind::InvalidValue);
  EXPECT_EQ(kind_of([] { binarize_label(6); }), ErrorKind::InvalidValue);
}

TEST(BinarizeLabel, TotalAndTwoValuedOffNeutral) {
  std::set<int> seen;
  for (int l : {1, 2, 4, 5}) {
    const auto v = binarize_label(l);
    ASSERT_TRUE(v.has_value());
    seen.insert(*v);
  }
  EXPECT_EQ(seen, (std::set<int>{0, 1}));
}

TEST(CleanSessions, FourMovesRemoved) {
  CleaningSummary sum;
  const std::vector<Session> in{session_with_moves({{1, 1}, {2, 2}, {3, 3}, {4, 4}})};
  EXPECT_TRUE(clean_sessions(in, &sum).empty());
  EXPECT_EQ(sum.dropped_short, 1u);
}

TEST(CleanSessions, OneRepeatCollapsed) {
  const std::vector<Session> in{session_with_moves({{3, 4}, {3, 4}, {5, 6}, {7, 8}, {9, 9}, {1, 1}})};
  const auto out = clean_sessions(in);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].session.move_count(), 5u);
  EXPECT_EQ(out[0].label, 1);
}

TEST(CleanSessions, TenWithTwoNeutral) {
  std::vector<Session> in;
  for (int i = 0; i < 10; ++i)
    in.push_back(session_with_moves({{1, 1}, {2, 2}, {3, 3}, {4, 4}, {5, 5}}, i < 2 ? 3 : (i % 2 ? 5 : 1)));
  CleaningSummary sum;
  EXPECT_EQ(clean_sessions(in, &sum).size(), 8u);
  EXPECT_EQ(sum.dropped_neutral, 2u);
  EXPECT_EQ(sum.kept, 8u);
}

TEST(CleanSessions, DedupIgnoresInterleavedNonMoves) {
  Session s = session_with_moves({{1, 1}});
  s.events.push_back({20, 0, 0, "click", ""});
  s.events.push_back({30, 1, 1, "mousemove", ""});
  const auto d = dedup_moves(s);
  ASSERT_EQ(d.events.size(), 2u);
  EXPECT_EQ(d.events[1].event_name, "click");
}

TEST(CleanSessions, IdempotentAndInvariants) {
  Rng rng(5);
  std::vector<Session> in;
  for (int i = 0; i < 200; ++i) {
    std::vector<std::pair<int, int>> xy;
    const std::size_t n = rng.below(12);
    for (std::size_t k = 0; k < n; ++k) xy.emplace_back(static_cast<int>(rng.below(3)), static_cast<int>(rng.below(3)));
    in.push_back(session_with_moves(xy, 1 + static_cast<int>(rng.below(5)), "r" + std::to_string(i)));
  }
  const auto once = clean_sessions(in);
  std::vector<Session> again_in;
  for (const auto& ls : once) again_in.push_back(ls.session);
  const auto twice = clean_sessions(again_in);
  EXPECT_EQ(once, twice);
  for (const auto& ls : once) {
    const auto moves = mouse_moves(ls.session);
    EXPECT_GE(moves.size(), 5u);
    for (std::size_t k = 1; k < moves.size(); ++k)
      EXPECT_FALSE(moves[k].x_px == moves[k - 1].x_px && moves[k].y_px == moves[k - 1].y_px);
  }
}

// ---------------------------------------------------------------------------
// Splits

namespace {

std::vector<LabeledSession> labeled(std::size_t pos, std::size_t neg) {
  std::vector<LabeledSession> out;
  for (std::size_t i = 0; i < pos + neg; ++i) {
    LabeledSession ls;
    ls.session = session_with_moves({{1, 1}}, 5, "id" + std::to_string(i));
    ls.label = i < pos ? 1 : 0;
    out.push_back(ls);
  }
  return out;
}

std::size_t positives(const std::vector<LabeledSession>& v) {
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](const auto& s) { return s.label == 1; }));
}

}  // namespace

TEST(StratifiedSplit, TenSessionsGiveSixOneThree) {
  const auto split = stratified_split(labeled(5, 5), {0.6, 0.1, 0.3}, 1);
  EXPECT_EQ(split.train.size(), 6u);
  EXPECT_EQ(split.val.size(), 1u);
  EXPECT_EQ(split.test.size(), 3u);
  EXPECT_EQ(positives(split.train), 3u);
}

TEST(StratifiedSplit, OrganicTableCounts) {
  const auto split = stratified_split(labeled(447, 222), {0.6, 0.1, 0.3}, 3);
  // Largest remainder over 669: 401.4, 66.9, 200.7 -> 401, 67, 201.
  EXPECT_EQ(split.train.size(), 401u);
  EXPECT_EQ(split.val.size(), 67u);
  EXPECT_EQ(split.test.size(), 201u);
  EXPECT_LE(std::abs(static_cast<double>(positives(split.test)) - 201.0 * 447.0 / 669.0), 1.0);
}

TEST(StratifiedSplit, DeterministicPerSeed) {
  const auto data = labeled(30, 20);
  const auto a = stratified_split(data, {0.6, 0.1, 0.3}, 8);
  const auto b = stratified_split(data, {0.6, 0.1, 0.3}, 8);
  const auto c = stratified_split(data, {0.6, 0.1, 0.3}, 9);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(a.train, c.train);
}

TEST(StratifiedSplit, Errors) {
  EXPECT_EQ(kind_of([] { stratified_split(labeled(5, 0), {0.6, 0.1, 0.3}, 1); }), ErrorKind::EmptyClass);
  EXPECT_EQ(kind_of([] { stratified_split(labeled(5, 5), {0.6, 0.1, 0.2}, 1); }), ErrorKind::InvalidValue);
  EXPECT_EQ(kind_of([] { stratified_split(labeled(5, 5), {1.2, -0.1, -0.1}, 1); }), ErrorKind::InvalidValue);
}

TEST(StratifiedSplit, PartitionAndProportionProperty) {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.below(400);
    std::vector<int> labels(n);
    for (auto& y : labels) y = rng.uniform() < rng.uniform() ? 1 : 0;
    labels[0] = 0;
    labels[1] = 1;
    const double a = rng.uniform(0.1, 0.8), b = rng.uniform(0.0, 1.0 - a);
    const SplitRatios ratios{a, b, 1.0 - a - b};
    const auto idx = stratified_split_indices(labels, ratios, rng.next_u64());
    std::vector<int> seen(n, 0);
    std::size_t total = 0;
    double pos = 0;
    for (int y : labels) pos += y;
    for (const auto& part : idx.parts) {
      total += part.size();
      double p = 0;
      for (auto i : part) {
        ++seen[i];
        p += labels[i];
      }
      EXPECT_LE(std::abs(p - std::round(static_cast<double>(part.size()) * pos / static_cast<double>(n))), 1.0);
    }
    EXPECT_EQ(total, n);
    EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
  }
}

TEST(StratifiedSplit, ByFormatSplitsEachGroup) {
  auto data = labeled(20, 20);
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i].session.ad_format = i % 2 ? AdFormat::DdRight : AdFormat::Organic;
  const auto split = stratified_split_by_format(data, {0.6, 0.1, 0.3}, 4);
  EXPECT_EQ(split.train.size() + split.val.size() + split.test.size(), data.size());
  for (auto fmt : {AdFormat::Organic, AdFormat::DdRight}) {
    const auto n = std::count_if(split.train.begin(), split.train.end(),
                                 [&](const auto& s) { return s.session.ad_format == fmt; });
    EXPECT_EQ(n, 12);
  }
}
