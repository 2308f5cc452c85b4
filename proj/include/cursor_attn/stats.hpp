#pragma once

// Classification metrics and nonparametric significance tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cursor_attn/error.hpp"

namespace cursor_attn {

// ---------------------------------------------------------------------------
// Metrics

struct WeightedPrf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ClassPrf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

inline void require_both_classes(std::span<const int> labels) {
  bool pos = false, neg = false;
  for (int y : labels) {
    if (y == 1) pos = true;
    else if (y == 0) neg = true;
    else fail(ErrorKind::InvalidValue, "labels must be 0 or 1");
  }
  if (!pos || !neg) fail(ErrorKind::SingleClass, "both classes must be present");
}

// Precision/recall/F1 of each class taken as the positive one; 0/0 cells
// are 0.
inline std::array<ClassPrf, 2> per_class_prf(std::span<const double> scores, std::span<const int> labels,
                                             double threshold = 0.5) {
  if (scores.size() != labels.size()) fail(ErrorKind::ShapeMismatch, "scores and labels differ in length");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] > threshold;
    if (labels[i] == 1) (pred ? tp : fn)++;
    else (pred ? fp : tn)++;
  }
  auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
  auto make = [&](std::size_t t_pos, std::size_t f_pos, std::size_t f_neg) {
    ClassPrf c;
    c.precision = ratio(t_pos, t_pos + f_pos);
    c.recall = ratio(t_pos, t_pos + f_neg);
    c.f1 = (c.precision + c.recall) == 0.0 ? 0.0 : 2.0 * c.precision * c.recall / (c.precision + c.recall);
    c.support = t_pos + f_neg;
    return c;
  };
  return {make(tn, fn, fp), make(tp, fp, fn)};
}

// Support-weighted mean over both classes. Prediction is p > threshold.
inline WeightedPrf weighted_prf(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5) {
  if (scores.size() != labels.size()) fail(ErrorKind::ShapeMismatch, "scores and labels differ in length");
  require_both_classes(labels);
  const auto cls = per_class_prf(scores, labels, threshold);
  const double n = static_cast<double>(labels.size());
  WeightedPrf out;
  for (const auto& c : cls) {
    const double w = static_cast<double>(c.support) / n;
    out.precision += w * c.precision;
    out.recall += w * c.recall;
    out.f1 += w * c.f1;
  }
  return out;
}

// Mann-Whitney U / (n_pos * n_neg) with average ranks for ties.
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) fail(ErrorKind::ShapeMismatch, "scores and labels differ in length");
  require_both_classes(labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(scores.size() - n_pos);
  const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
  return u / (np * nn);
}

// ---------------------------------------------------------------------------
// Distributions

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Regularized upper incomplete gamma Q(a, x): series for x < a + 1,
// Lentz continued fraction otherwise.
inline double gamma_q(double a, double x) {
  if (a <= 0.0) fail(ErrorKind::InvalidValue, "gamma_q needs a > 0");
  if (x <= 0.0) return 1.0;
  const double log_prefix = a * std::log(x) - x - std::lgamma(a);
  constexpr double kEps = 1e-16;
  if (x < a + 1.0) {
    double term = 1.0 / a, sum = term;
    for (int n = 1; n < 10000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * kEps) break;
    }
    return std::clamp(1.0 - sum * std::exp(log_prefix), 0.0, 1.0);
  }
  constexpr double kTiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / kTiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::clamp(std::exp(log_prefix) * h, 0.0, 1.0);
}

// Upper tail of the chi-squared distribution.
inline double chi2_sf(double statistic, double dof) { return gamma_q(0.5 * dof, 0.5 * statistic); }

// ---------------------------------------------------------------------------
// Tests

enum class TestKind { Wilcoxon, Friedman };

inline std::string_view test_name(TestKind t) { return t == TestKind::Wilcoxon ? "wilcoxon" : "friedman"; }

struct ComparisonResult {
  TestKind test = TestKind::Wilcoxon;
  double statistic = 0.0;
  double p_value = 1.0;
  std::optional<double> effect_r;
  std::optional<double> corrected_p;
  std::optional<double> z;
  std::size_t n = 0;  // contributing pairs (Wilcoxon) or blocks (Friedman)
  bool exact = false;
};

// Average ranks (1-based) of `values`; also returns the tie-group sizes.
inline std::vector<double> average_ranks(std::span<const double> values, std::vector<std::size_t>* tie_sizes = nullptr) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    if (tie_sizes) tie_sizes->push_back(j - i);
    i = j;
  }
  return ranks;
}

inline constexpr std::size_t kWilcoxonExactMaxN = 25;

// Counts sign assignments by their doubled positive-rank sum. Doubled ranks
// are integers even with ties.
inline std::vector<double> signed_rank_sum_counts(std::span<const int> doubled_ranks) {
  int total = 0;
  for (int r : doubled_ranks) total += r;
  std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
  counts[0] = 1.0;
  int reach = 0;
  for (int r : doubled_ranks) {
    for (int s = reach; s >= 0; --s)
      if (counts[s] != 0.0) counts[s + r] += counts[s];
    reach += r;
  }
  return counts;
}

// Paired two-sided test. W = min(T+, T-); zero differences dropped; exact
// null distribution for n <= 25, otherwise normal approximation with tie
// and continuity corrections. r = Z / sqrt(n), signed by the direction of
// a - b.
inline ComparisonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorKind::ShapeMismatch, "paired samples must be equally long");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] - b[i] != 0.0) diffs.push_back(a[i] - b[i]);
  if (diffs.empty() && !a.empty()) fail(ErrorKind::AllZeroDifferences, "all paired differences are zero");
  if (diffs.size() < 3) fail(ErrorKind::TooFewPairs, "need at least 3 nonzero paired differences");

  std::vector<double> magnitudes(diffs.size());
  for (std::size_t i = 0; i < diffs.size(); ++i) magnitudes[i] = std::abs(diffs[i]);
  std::vector<std::size_t> ties;
  const auto ranks = average_ranks(magnitudes, &ties);

  double t_plus = 0.0, t_minus = 0.0;
  for (std::size_t i = 0; i < diffs.size(); ++i) (diffs[i] > 0 ? t_plus : t_minus) += ranks[i];

  const double n = static_cast<double>(diffs.size());
  const double mean = n * (n + 1.0) / 4.0;
  double tie_term = 0.0;
  for (std::size_t t : ties) tie_term += static_cast<double>(t * t * t - t);
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
  const double sd = std::sqrt(var);
  const double dev = t_plus - mean;
  const double z = sd > 0.0 ? std::copysign(std::max(0.0, std::abs(dev) - 0.5), dev) / sd : 0.0;

  ComparisonResult res;
  res.test = TestKind::Wilcoxon;
  res.statistic = std::min(t_plus, t_minus);
  res.n = diffs.size();
  res.z = z;
  res.effect_r = z / std::sqrt(n);
  if (diffs.size() <= kWilcoxonExactMaxN) {
    std::vector<int> doubled(ranks.size());
    for (std::size_t i = 0; i < ranks.size(); ++i) doubled[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
    const auto counts = signed_rank_sum_counts(doubled);
    const int w2 = static_cast<int>(std::lround(2.0 * res.statistic));
    double tail = 0.0, total = 0.0;
    for (std::size_t s = 0; s < counts.size(); ++s) {
      total += counts[s];
      if (static_cast<int>(s) <= w2) tail += counts[s];
    }
    res.p_value = std::min(1.0, 2.0 * tail / total);
    res.exact = true;
  } else {
    res.p_value = std::min(1.0, 2.0 * normal_cdf(-std::abs(z)));
  }
  return res;
}

// Friedman rank test over a k-treatments x n-blocks matrix (rows are
// treatments). Ranks within each block use average ranks; the statistic is
// divided by the standard tie correction. A fully tied design yields 0.
inline ComparisonResult friedman_test(const std::vector<std::vector<double>>& treatments) {
  const std::size_t k = treatments.size();
  if (k < 3) fail(ErrorKind::TooFewTreatments, "Friedman test needs at least 3 treatments");
  const std::size_t n = treatments[0].size();
  for (const auto& row : treatments)
    if (row.size() != n) fail(ErrorKind::ShapeMismatch, "every treatment needs the same number of blocks");
  if (n < 2) fail(ErrorKind::TooFewPairs, "Friedman test needs at least 2 blocks");

  std::vector<double> rank_sum(k, 0.0);
  double tie_term = 0.0;
  std::vector<double> block(k);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < k; ++i) block[i] = treatments[i][j];
    std::vector<std::size_t> ties;
    const auto r = average_ranks(block, &ties);
    for (std::size_t i = 0; i < k; ++i) rank_sum[i] += r[i];
    for (std::size_t t : ties) tie_term += static_cast<double>(t * t * t - t);
  }
  const double kd = static_cast<double>(k), nd = static_cast<double>(n);
  double ss = 0.0;
  for (double rs : rank_sum) {
    const double dev = rs / nd - (kd + 1.0) / 2.0;
    ss += dev * dev;
  }
  const double raw = 12.0 * nd / (kd * (kd + 1.0)) * ss;
  const double correction = 1.0 - tie_term / (nd * kd * (kd * kd - 1.0));

  ComparisonResult res;
  res.test = TestKind::Friedman;
  res.n = n;
  res.statistic = correction > 1e-12 ? raw / correction : 0.0;
  res.p_value = res.statistic > 0.0 ? chi2_sf(res.statistic, kd - 1.0) : 1.0;
  return res;
}

// Holm step-down adjustment, returned in input order.
inline std::vector<double> holm_correction(std::span<const double> p_values) {
  for (double p : p_values)
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::InvalidValue, "p-values must lie in [0, 1]");
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::vector<double> out(m);
  double running = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double adj = std::min(1.0, static_cast<double>(m - j) * p_values[order[j]]);
    running = std::max(running, adj);
    out[order[j]] = running;
  }
  return out;
}

}  // namespace cursor_attn
