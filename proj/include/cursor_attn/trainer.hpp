#pragma once

// Training protocol: epoch loop with early stopping and best-epoch restore,
// random hyperparameter search with repeated fits, and the learning-rate
// range test.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cursor_attn/error.hpp"
#include "cursor_attn/nn.hpp"
#include "cursor_attn/parallel.hpp"
#include "cursor_attn/rng.hpp"
#include "cursor_attn/stats.hpp"

namespace cursor_attn {

struct Dataset {
  std::vector<std::vector<double>> inputs;
  std::vector<int> labels;
  std::vector<std::string> ids;

  std::size_t size() const { return inputs.size(); }
  bool empty() const { return inputs.empty(); }

  void add(std::vector<double> x, int y, std::string id = {}) {
    inputs.push_back(std::move(x));
    labels.push_back(y);
    ids.push_back(std::move(id));
  }

  std::vector<Sample> views() const {
    std::vector<Sample> v;
    v.reserve(inputs.size());
    for (const auto& x : inputs) v.emplace_back(x);
    return v;
  }
};

enum class Monitor { ValLoss, ValAuc };

inline constexpr int kRecurrentMaxEpochs = 90;
inline constexpr int kRecurrentPatience = 20;
inline constexpr int kConvMaxEpochs = 300;
inline constexpr int kConvPatience = 30;

struct TrainConfig {
  double eta = 1e-3;
  int batch_size = 32;
  int max_epochs = kRecurrentMaxEpochs;
  int patience = kRecurrentPatience;
  Monitor monitor = Monitor::ValLoss;
  std::uint64_t seed = 0;
  int jobs = 1;

  static TrainConfig recurrent(double eta, int batch_size, std::uint64_t seed) {
    return {eta, batch_size, kRecurrentMaxEpochs, kRecurrentPatience, Monitor::ValLoss, seed, 1};
  }
  static TrainConfig convolutional(double eta, int batch_size, std::uint64_t seed) {
    return {eta, batch_size, kConvMaxEpochs, kConvPatience, Monitor::ValAuc, seed, 1};
  }
};

inline void validate_config(const TrainConfig& c) {
  if (!(c.eta > 0.0)) fail(ErrorKind::InvalidValue, "learning rate must be positive");
  if (c.batch_size != 16 && c.batch_size != 32 && c.batch_size != 64)
    fail(ErrorKind::InvalidValue, "batch size must be 16, 32 or 64");
  if (c.max_epochs < 1 || c.patience < 1 || c.patience >= c.max_epochs)
    fail(ErrorKind::InvalidValue, "need 1 <= patience < max_epochs");
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"eta", c.eta},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"monitor", c.monitor == Monitor::ValLoss ? "val_loss" : "val_auc"},
          {"seed", c.seed}};
}

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_auc = 0.5;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 1-based, 0 before the first epoch
  bool stopped_early = false;
  double best_metric = 0.0;
};

// Tracks the monitored metric. An epoch improves only when strictly better
// than the best so far; training stops once `patience` consecutive epochs
// fail to improve.
class EarlyStopping {
 public:
  EarlyStopping(int patience, Monitor monitor) : patience_(patience), monitor_(monitor) {}

  // Returns true when training should stop after this epoch.
  bool update(double metric) {
    ++epoch_;
    const bool better = best_epoch_ == 0 || (monitor_ == Monitor::ValLoss ? metric < best_ : metric > best_);
    if (better) {
      best_ = metric;
      best_epoch_ = epoch_;
      wait_ = 0;
      improved_ = true;
      return false;
    }
    improved_ = false;
    return ++wait_ >= patience_;
  }

  bool improved() const { return improved_; }
  int best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  int patience_;
  Monitor monitor_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  int wait_ = 0;
  double best_ = 0.0;
  bool improved_ = false;
};

// AUC that degrades to 0.5 when only one class is present.
inline double safe_auc(std::span<const double> scores, std::span<const int> labels) {
  const bool pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  const bool neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
  return pos && neg ? roc_auc(scores, labels) : 0.5;
}

inline std::vector<double> predict_all(const Model& m, const Dataset& data, int jobs = 1) {
  std::vector<double> out(data.size());
  parallel_for(data.size(), jobs, [&](std::size_t i) { out[i] = predict_proba(m, data.inputs[i]); });
  return out;
}

struct ValidationScore {
  double loss = 0.0;
  double auc = 0.5;
};

inline ValidationScore evaluate(const Model& m, const Dataset& data, int jobs = 1) {
  const auto p = predict_all(m, data, jobs);
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) loss += bce(p[i], data.labels[i]);
  return {data.empty() ? 0.0 : loss / static_cast<double>(p.size()), safe_auc(p, data.labels)};
}

struct FitHooks {
  // Called after each epoch's metrics are computed and before the stopping
  // rule sees them; may rewrite the record.
  std::function<void(EpochRecord&)> on_epoch;
};

struct FitResult {
  Model model;
  TrainHistory history;
};

inline FitResult fit(Model model, const Dataset& train, const Dataset& val, const TrainConfig& config,
                     const FitHooks& hooks = {}) {
  if (train.empty() || val.empty()) fail(ErrorKind::EmptySet, "training and validation sets must be nonempty");
  validate_config(config);
  AdamState opt = AdamState::for_model(model, config.eta);
  EarlyStopping stopper(config.patience, config.monitor);
  TrainHistory history;
  std::vector<Param> best_params = model.params;

  const auto views = train.views();
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Sample> batch;
  std::vector<int> labels;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(config.seed, "epoch_shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    model.mode = Mode::Train;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(views[order[i]]);
        labels.push_back(train.labels[order[i]]);
      }
      const auto lg = loss_and_grads(model, batch, labels, config.jobs);
      loss_sum += lg.loss * static_cast<double>(end - start);
      adam_step(opt, model, lg.grads);
    }
    model.mode = Mode::Infer;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    const auto score = evaluate(model, val, config.jobs);
    rec.val_loss = score.loss;
    rec.val_auc = score.auc;
    if (hooks.on_epoch) hooks.on_epoch(rec);
    history.epochs.push_back(rec);

    const bool stop = stopper.update(config.monitor == Monitor::ValLoss ? rec.val_loss : rec.val_auc);
    if (stopper.improved()) best_params = model.params;
    if (stop) {
      history.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  history.best_epoch = stopper.best_epoch();
  history.best_metric = stopper.best();
  model.params = std::move(best_params);
  model.mode = Mode::Infer;
  return {std::move(model), std::move(history)};
}

// ---------------------------------------------------------------------------
// Random search

struct SearchSpace {
  std::vector<double> eta_grid{1e-3, 1e-4, 1e-5, 1e-6, 1e-7};
  std::vector<int> n_grid = hidden_grid();
  std::vector<double> q_grid = drop_rate_grid();
  std::vector<int> b_grid{16, 32, 64};
  int budget = 20;
};

struct SearchOptions {
  Arch arch = Arch::GRU;
  InputShape input = InputShape::sequence(50, 2);
  int repeats = 3;
  int max_epochs = kRecurrentMaxEpochs;
  int patience = kRecurrentPatience;
  Monitor monitor = Monitor::ValLoss;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct TrialRecord {
  int trial = 0;
  int repeat = 0;
  ModelSpec spec;
  TrainConfig config;
  TrainHistory history;
  double val_loss = 0.0;  // validation loss at the restored epoch
  double wall_ms = 0.0;
};

struct SearchResult {
  ModelSpec best_spec;
  TrainConfig best_config;
  int best_trial = 0;
  std::vector<double> trial_mean_val_loss;
  std::vector<TrialRecord> log;
  Model best_model;  // lowest validation loss among the winner's repeats
};

struct SampledConfig {
  double eta;
  int n;
  double q;
  int b;
};

inline std::vector<SampledConfig> sample_configs(const SearchSpace& space, std::uint64_t seed) {
  if (space.budget < 1) fail(ErrorKind::EmptySpace, "search budget must be at least 1");
  if (space.eta_grid.empty() || space.n_grid.empty() || space.q_grid.empty() || space.b_grid.empty())
    fail(ErrorKind::EmptySpace, "every search grid must be nonempty");
  Rng rng(derive_seed(seed, "search_sample"));
  std::vector<SampledConfig> out;
  for (int t = 0; t < space.budget; ++t) {
    SampledConfig c;
    c.eta = space.eta_grid[rng.below(space.eta_grid.size())];
    c.n = space.n_grid[rng.below(space.n_grid.size())];
    c.q = space.q_grid[rng.below(space.q_grid.size())];
    c.b = space.b_grid[rng.below(space.b_grid.size())];
    out.push_back(c);
  }
  return out;
}

inline nlohmann::json to_json(const TrialRecord& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.history.epochs)
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"val_auc", e.val_auc}});
  return {{"trial", r.trial},
          {"repeat", r.repeat},
          {"spec", to_json(r.spec)},
          {"config", to_json(r.config)},
          {"seeds", {{"model", r.spec.seed}, {"train", r.config.seed}}},
          {"epochs", epochs},
          {"best_epoch", r.history.best_epoch},
          {"stopped_early", r.history.stopped_early},
          {"val_loss", r.val_loss},
          {"wall_ms", r.wall_ms}};
}

// Every sampled configuration is fit `repeats` times with seeds derived from
// (seed, trial, repeat); the configuration with the lowest mean validation
// loss wins, ties going to smaller eta and then smaller n. Fits run in
// parallel across trials; results do not depend on `jobs`.
inline SearchResult random_search(const SearchSpace& space, const Dataset& train, const Dataset& val,
                                  const SearchOptions& opt) {
  if (opt.repeats < 1) fail(ErrorKind::InvalidValue, "repeats must be at least 1");
  const auto configs = sample_configs(space, opt.seed);
  const std::size_t k = static_cast<std::size_t>(opt.repeats);
  const std::size_t fits = configs.size() * k;
  std::vector<TrialRecord> log(fits);
  std::vector<std::optional<Model>> models(fits);

  parallel_for(fits, opt.jobs, [&](std::size_t idx) {
    const int trial = static_cast<int>(idx / k);
    const int repeat = static_cast<int>(idx % k);
    const auto& c = configs[static_cast<std::size_t>(trial)];
    const std::uint64_t fit_seed = derive_seed(opt.seed, "trial", static_cast<std::uint64_t>(trial),
                                               static_cast<std::uint64_t>(repeat));
    ModelSpec spec{opt.arch, c.n, c.q, opt.input, derive_seed(fit_seed, "model")};
    TrainConfig cfg{c.eta, c.b, opt.max_epochs, opt.patience, opt.monitor, derive_seed(fit_seed, "train"), 1};
    const auto t0 = std::chrono::steady_clock::now();
    auto result = fit(init_model(spec), train, val, cfg);
    const auto t1 = std::chrono::steady_clock::now();
    TrialRecord rec;
    rec.trial = trial;
    rec.repeat = repeat;
    rec.spec = spec;
    rec.config = cfg;
    rec.val_loss = result.history.epochs[static_cast<std::size_t>(result.history.best_epoch - 1)].val_loss;
    rec.history = std::move(result.history);
    rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    log[idx] = std::move(rec);
    models[idx] = std::move(result.model);
  });

  SearchResult out;
  out.trial_mean_val_loss.assign(configs.size(), 0.0);
  for (const auto& r : log) out.trial_mean_val_loss[static_cast<std::size_t>(r.trial)] += r.val_loss / static_cast<double>(k);

  std::size_t best = 0;
  for (std::size_t t = 1; t < configs.size(); ++t) {
    const double a = out.trial_mean_val_loss[t], b = out.trial_mean_val_loss[best];
    const bool better = a < b || (a == b && (configs[t].eta < configs[best].eta ||
                                             (configs[t].eta == configs[best].eta && configs[t].n < configs[best].n)));
    if (better) best = t;
  }
  out.best_trial = static_cast<int>(best);
  std::size_t best_fit = best * k;
  for (std::size_t r = 1; r < k; ++r)
    if (log[best * k + r].val_loss < log[best_fit].val_loss) best_fit = best * k + r;
  out.best_spec = log[best_fit].spec;
  out.best_config = log[best_fit].config;
  out.best_model = std::move(*models[best_fit]);
  out.log = std::move(log);
  return out;
}

// ---------------------------------------------------------------------------
// Learning-rate range test

inline constexpr double kLrSmoothing = 0.98;
inline constexpr double kLrDivergenceFactor = 4.0;
// Slopes are only read between these trims: the first points are dominated
// by the EMA warm-up, the last by the blow-up.
inline constexpr std::size_t kLrSkipStart = 10;
inline constexpr std::size_t kLrSkipEnd = 5;

struct LrPoint {
  double eta = 0.0;
  double loss = 0.0;
  double smoothed = 0.0;
};

struct LrRangeResult {
  std::vector<LrPoint> points;
  bool diverged = false;
  double suggested_eta = 0.0;
  double steepest_eta = 0.0;
};

// Sweeps eta geometrically from eta_min to eta_max, one training step per
// value. `step(eta)` performs a step and returns the loss it observed.
// The loss is smoothed with a bias-corrected EMA; the sweep stops early
// once the smoothed loss exceeds 4x its running minimum. The suggestion is
// the eta at the steepest descent of the smoothed loss (per log eta)
// divided by 10, or eta_min when the curve never descends. Long sweeps
// drop the first 10 and last 5 points from the slope search.
inline LrRangeResult lr_sweep(double eta_min, double eta_max, int steps, const std::function<double(double)>& step) {
  if (!(eta_min > 0.0) || !(eta_max > eta_min)) fail(ErrorKind::InvalidValue, "need 0 < eta_min < eta_max");
  if (steps < 2) fail(ErrorKind::InvalidValue, "range test needs at least 2 steps");
  LrRangeResult out;
  const double ratio = std::log(eta_max / eta_min);
  double avg = 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < steps; ++i) {
    const double eta = eta_min * std::exp(ratio * i / (steps - 1));
    const double loss = step(eta);
    avg = kLrSmoothing * avg + (1.0 - kLrSmoothing) * loss;
    const double smoothed = avg / (1.0 - std::pow(kLrSmoothing, i + 1));
    if (!std::isfinite(smoothed) || (i > 0 && smoothed > kLrDivergenceFactor * best)) {
      out.diverged = true;
      break;
    }
    best = std::min(best, smoothed);
    out.points.push_back({eta, loss, smoothed});
  }
  double steepest = 0.0;
  std::size_t at = 0;
  std::size_t lo = 0, hi = out.points.size();
  if (hi > kLrSkipStart + kLrSkipEnd + 1) {
    lo = kLrSkipStart;
    hi -= kLrSkipEnd;
  }
  for (std::size_t i = lo; i + 1 < hi; ++i) {
    const auto& a = out.points[i];
    const auto& b = out.points[i + 1];
    const double slope = (b.smoothed - a.smoothed) / (std::log(b.eta) - std::log(a.eta));
    if (slope < steepest) {
      steepest = slope;
      at = i;
    }
  }
  if (steepest < 0.0) {
    out.steepest_eta = out.points[at].eta;
    out.suggested_eta = std::clamp(out.steepest_eta / 10.0, eta_min, eta_max);
  } else {
    out.steepest_eta = eta_min;
    out.suggested_eta = eta_min;
  }
  return out;
}

// Range test on a fresh model: Adam steps over cycling shuffled mini-batches
// with the learning rate overridden per step.
inline LrRangeResult lr_range_test(const ModelSpec& spec, const Dataset& train, double eta_min, double eta_max,
                                   int steps, int batch_size, std::uint64_t seed, int jobs = 1) {
  if (train.empty()) fail(ErrorKind::EmptySet, "training set must be nonempty");
  Model model = init_model(spec);
  model.mode = Mode::Train;
  AdamState opt = AdamState::for_model(model, eta_min);
  const auto views = train.views();
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "lr_range"));
  rng.shuffle(order);
  std::size_t cursor = 0;
  std::vector<Sample> batch;
  std::vector<int> labels;
  return lr_sweep(eta_min, eta_max, steps, [&](double eta) {
    batch.clear();
    labels.clear();
    for (int i = 0; i < batch_size; ++i) {
      if (cursor == order.size()) {
        cursor = 0;
        rng.shuffle(order);
      }
      batch.push_back(views[order[cursor]]);
      labels.push_back(train.labels[order[cursor]]);
      ++cursor;
    }
    const auto lg = loss_and_grads(model, batch, labels, jobs);
    opt.eta = eta;
    adam_step(opt, model, lg.grads);
    return lg.loss;
  });
}

}  // namespace cursor_attn
