#pragma once

// Evaluation reports and multi-report comparison (omnibus Friedman test
// gating pairwise Wilcoxon tests with Holm correction).

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cursor_attn/error.hpp"
#include "cursor_attn/stats.hpp"

namespace cursor_attn {

struct EvalReport {
  std::string model_id;
  std::string representation;
  std::string ad_format;
  bool placeholder = false;
  std::vector<std::string> session_ids;
  std::vector<double> scores;
  std::vector<int> labels;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  double auc = 0.5;
  nlohmann::json config = nlohmann::json::object();
};

inline EvalReport make_report(std::string model_id, std::string representation, std::vector<std::string> ids,
                              std::vector<double> scores, std::vector<int> labels) {
  if (scores.empty() || scores.size() != labels.size())
    fail(ErrorKind::ShapeMismatch, "a report needs equally many (nonzero) scores and labels");
  EvalReport r;
  r.model_id = std::move(model_id);
  r.representation = std::move(representation);
  r.session_ids = std::move(ids);
  r.scores = std::move(scores);
  r.labels = std::move(labels);
  const auto prf = weighted_prf(r.scores, r.labels);
  r.weighted_precision = prf.precision;
  r.weighted_recall = prf.recall;
  r.weighted_f1 = prf.f1;
  r.auc = roc_auc(r.scores, r.labels);
  return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
  return {{"model_id", r.model_id},
          {"representation", r.representation},
          {"ad_format", r.ad_format},
          {"placeholder", r.placeholder},
          {"session_ids", r.session_ids},
          {"scores", r.scores},
          {"labels", r.labels},
          {"weighted_precision", r.weighted_precision},
          {"weighted_recall", r.weighted_recall},
          {"weighted_f1", r.weighted_f1},
          {"auc", r.auc},
          {"config", r.config}};
}

// Metrics are recomputed from the raw arrays rather than trusted.
inline EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r = make_report(j.at("model_id").get<std::string>(), j.value("representation", ""),
                               j.value("session_ids", std::vector<std::string>{}),
                               j.at("scores").get<std::vector<double>>(), j.at("labels").get<std::vector<int>>());
    r.ad_format = j.value("ad_format", "");
    r.placeholder = j.value("placeholder", false);
    r.config = j.value("config", nlohmann::json::object());
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::MalformedInput, std::string("report: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Comparison

inline constexpr double kOmnibusAlpha = 0.05;

struct CompareOptions {
  // "report": every report is a treatment, blocks are shared test sessions,
  // values are per-session absolute errors |label - p|. Otherwise the name
  // of a report field (model_id, representation, ad_format, placeholder):
  // treatments are its distinct values, blocks the combinations of the
  // other fields, values the chosen metric.
  std::string factor = "report";
  std::string metric = "auc";  // auc | f1 | precision | recall
};

struct TreatmentMatrix {
  std::vector<std::string> treatments;
  std::vector<std::string> blocks;
  std::vector<std::vector<double>> values;  // treatments x blocks
};

inline double metric_of(const EvalReport& r, const std::string& metric) {
  if (metric == "auc") return r.auc;
  if (metric == "f1") return r.weighted_f1;
  if (metric == "precision") return r.weighted_precision;
  if (metric == "recall") return r.weighted_recall;
  fail(ErrorKind::InvalidValue, "unknown metric " + metric);
}

inline std::string field_of(const EvalReport& r, const std::string& field) {
  if (field == "model_id") return r.model_id;
  if (field == "representation") return r.representation;
  if (field == "ad_format") return r.ad_format;
  if (field == "placeholder") return r.placeholder ? "ad" : "no-ad";
  fail(ErrorKind::InvalidValue, "unknown comparison factor " + field);
}

inline TreatmentMatrix build_matrix(std::span<const EvalReport> reports, const std::vector<std::string>& names,
                                    const CompareOptions& opt) {
  TreatmentMatrix m;
  if (opt.factor == "report") {
    m.treatments = names;
    const auto& first = reports.front();
    std::vector<std::map<std::string, double>> err(reports.size());
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto& r = reports[i];
      for (std::size_t s = 0; s < r.scores.size(); ++s) {
        const std::string id = s < r.session_ids.size() ? r.session_ids[s] : std::to_string(s);
        err[i][id] = std::abs(static_cast<double>(r.labels[s]) - r.scores[s]);
      }
    }
    m.values.assign(reports.size(), {});
    for (std::size_t s = 0; s < first.scores.size(); ++s) {
      const std::string id = s < first.session_ids.size() ? first.session_ids[s] : std::to_string(s);
      if (!std::all_of(err.begin(), err.end(), [&](const auto& e) { return e.count(id) > 0; })) continue;
      m.blocks.push_back(id);
      for (std::size_t i = 0; i < reports.size(); ++i) m.values[i].push_back(err[i].at(id));
    }
    return m;
  }

  static const std::vector<std::string> kFields{"model_id", "representation", "ad_format", "placeholder"};
  if (std::find(kFields.begin(), kFields.end(), opt.factor) == kFields.end())
    fail(ErrorKind::InvalidValue, "unknown comparison factor " + opt.factor);
  std::map<std::string, std::map<std::string, std::pair<double, int>>> cells;  // treatment -> block -> (sum, count)
  for (const auto& r : reports) {
    std::string block;
    for (const auto& f : kFields)
      if (f != opt.factor) block += (block.empty() ? "" : "|") + field_of(r, f);
    auto& cell = cells[field_of(r, opt.factor)][block];
    cell.first += metric_of(r, opt.metric);
    ++cell.second;
  }
  for (const auto& [t, _] : cells) m.treatments.push_back(t);
  std::set<std::string> shared;
  for (const auto& [block, _] : cells.begin()->second) shared.insert(block);
  for (const auto& [t, blocks] : cells)
    for (auto it = shared.begin(); it != shared.end();) it = blocks.count(*it) ? std::next(it) : shared.erase(it);
  m.blocks.assign(shared.begin(), shared.end());
  for (const auto& [t, blocks] : cells) {
    std::vector<double> row;
    for (const auto& b : m.blocks) row.push_back(blocks.at(b).first / blocks.at(b).second);
    m.values.push_back(std::move(row));
  }
  return m;
}

inline nlohmann::json to_json(const ComparisonResult& r) {
  nlohmann::json j{{"test", std::string(test_name(r.test))}, {"statistic", r.statistic}, {"p_value", r.p_value},
                   {"n", r.n}};
  if (r.test == TestKind::Wilcoxon) j["exact"] = r.exact;
  if (r.effect_r) j["effect_r"] = *r.effect_r;
  if (r.z) j["z"] = *r.z;
  if (r.corrected_p) j["corrected_p"] = *r.corrected_p;
  return j;
}

struct PairwiseResult {
  std::string a;
  std::string b;
  ComparisonResult result;
};

struct ComparisonOutcome {
  TreatmentMatrix matrix;
  std::optional<ComparisonResult> omnibus;
  std::vector<PairwiseResult> pairwise;
  std::string note;
};

// Two treatments: a direct Wilcoxon test. Three or more: Friedman first,
// and pairwise Wilcoxon tests with Holm correction only if p < 0.05.
inline ComparisonOutcome compare_reports(std::span<const EvalReport> reports, const std::vector<std::string>& names,
                                         const CompareOptions& opt) {
  if (reports.size() < 2) fail(ErrorKind::TooFewReports, "need at least 2 reports");
  ComparisonOutcome out;
  out.matrix = build_matrix(reports, names, opt);
  const auto& m = out.matrix;
  const std::size_t k = m.treatments.size();
  if (k < 2) fail(ErrorKind::TooFewReports, "need at least 2 treatment groups");

  if (k >= 3) {
    out.omnibus = friedman_test(m.values);
    if (out.omnibus->p_value >= kOmnibusAlpha) {
      out.note = "omnibus test not significant (p >= 0.05); pairwise tests skipped";
      return out;
    }
  }
  std::vector<double> raw;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      out.pairwise.push_back({m.treatments[i], m.treatments[j], wilcoxon_signed_rank(m.values[i], m.values[j])});
      raw.push_back(out.pairwise.back().result.p_value);
    }
  const auto corrected = holm_correction(raw);
  for (std::size_t i = 0; i < out.pairwise.size(); ++i) out.pairwise[i].result.corrected_p = corrected[i];
  return out;
}

inline nlohmann::json to_json(const ComparisonOutcome& o) {
  nlohmann::json j;
  j["treatments"] = o.matrix.treatments;
  j["blocks"] = o.matrix.blocks.size();
  j["omnibus"] = o.omnibus ? to_json(*o.omnibus) : nlohmann::json(nullptr);
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : o.pairwise) {
    auto entry = to_json(p.result);
    entry["a"] = p.a;
    entry["b"] = p.b;
    pairs.push_back(std::move(entry));
  }
  j["pairwise"] = std::move(pairs);
  if (!o.note.empty()) j["note"] = o.note;
  return j;
}

}  // namespace cursor_attn
