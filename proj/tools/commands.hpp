#pragma once

// Subcommand implementations behind the cursor_attn binary. Each command
// takes a plain options struct and writes human-readable progress to `log`.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "cursor_attn/cursor_attn.hpp"

namespace cursor_attn::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// File helpers

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IOFailure, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IOFailure, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::IOFailure, "write failed for " + path.string());
}

inline void write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  write_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorKind::IOFailure, "sha256 failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return hex.str();
}

inline std::vector<LabeledSession> load_dataset(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IOFailure, "cannot read dataset " + path.string());
  try {
    return read_dataset(in);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

inline void save_dataset(const fs::path& path, std::span<const LabeledSession> sessions) {
  std::ostringstream out;
  write_dataset(out, sessions);
  write_file(path, out.str());
}

inline SplitRatios parse_ratios(const std::vector<double>& r) {
  if (r.size() != 3) fail(ErrorKind::InvalidValue, "ratios need exactly three values");
  SplitRatios out{r[0], r[1], r[2]};
  validate_ratios(out);
  return out;
}

// ---------------------------------------------------------------------------
// ingest

struct IngestOptions {
  std::vector<fs::path> inputs;
  fs::path output;
  int min_events = kMinMouseCoordinates;
};

// Session logs: *.json holds one session, *.jsonl one session per line.
inline std::vector<Session> read_session_logs(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::directory_iterator(in)) {
        const auto ext = entry.path().extension();
        if (entry.is_regular_file() && (ext == ".json" || ext == ".jsonl")) found.push_back(entry.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(in)) {
      files.push_back(in);
    } else {
      fail(ErrorKind::IOFailure, "no such file or directory: " + in.string());
    }
  }
  std::vector<Session> sessions;
  for (const auto& file : files) {
    const std::string text = read_file(file);
    if (file.extension() == ".jsonl") {
      std::istringstream lines(text);
      std::string line;
      std::size_t line_no = 0;
      while (std::getline(lines, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
          sessions.push_back(parse_session_log(line));
        } catch (const Error& e) {
          fail(e.kind(), file.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
      }
    } else {
      try {
        sessions.push_back(parse_session_log(text));
      } catch (const Error& e) {
        fail(e.kind(), file.string() + ": " + e.what());
      }
    }
  }
  return sessions;
}

inline CleaningSummary cmd_ingest(const IngestOptions& opt, std::ostream& log) {
  const auto sessions = read_session_logs(opt.inputs);
  CleaningSummary summary;
  const auto cleaned = clean_sessions(sessions, &summary, opt.min_events);
  save_dataset(opt.output, cleaned);
  if (sessions.empty()) log << "warning: no sessions found in input\n";
  log << "kept " << summary.kept << ", dropped-short " << summary.dropped_short << ", dropped-neutral "
      << summary.dropped_neutral << "\n";
  log << "class ratio positive:negative = " << summary.positives << ":" << (summary.kept - summary.positives) << "\n";
  return summary;
}

// ---------------------------------------------------------------------------
// split

struct SplitOptions {
  fs::path dataset;
  fs::path out_dir;
  std::vector<double> ratios{0.6, 0.1, 0.3};
  std::uint64_t seed = 0;
  std::string by;  // "" or "ad_format"
};

inline DatasetSplit split_sessions(std::span<const LabeledSession> sessions, const SplitRatios& ratios,
                                   std::uint64_t seed, const std::string& by) {
  if (by.empty()) return stratified_split(sessions, ratios, seed);
  if (by == "ad_format") return stratified_split_by_format(sessions, ratios, seed);
  fail(ErrorKind::InvalidValue, "unknown --by value " + by);
}

inline DatasetSplit cmd_split(const SplitOptions& opt, std::ostream& log) {
  const auto sessions = load_dataset(opt.dataset);
  auto split = split_sessions(sessions, parse_ratios(opt.ratios), derive_seed(opt.seed, "split"), opt.by);
  save_dataset(opt.out_dir / "train.jsonl", split.train);
  save_dataset(opt.out_dir / "val.jsonl", split.val);
  save_dataset(opt.out_dir / "test.jsonl", split.test);
  log << "train " << split.train.size() << ", val " << split.val.size() << ", test " << split.test.size() << "\n";
  return split;
}

// ---------------------------------------------------------------------------
// render

struct RenderOptions {
  fs::path dataset;
  fs::path out_dir;
  std::string style = "traj";
  bool with_ad = false;
  bool all_styles = false;
  int jobs = 1;
};

struct RenderJob {
  std::size_t session;
  RenderStyle style;
  std::string file;
};

inline nlohmann::json cmd_render(const RenderOptions& opt, std::ostream& log) {
  const auto sessions = load_dataset(opt.dataset);
  std::vector<RenderStyle> styles;
  if (opt.all_styles) {
    for (bool ad : {false, true})
      for (StyleKind k : kAllStyleKinds) styles.push_back({k, ad});
  } else {
    const auto kind = parse_style(opt.style);
    if (!kind) fail(ErrorKind::InvalidValue, "unknown style " + opt.style);
    styles.push_back({*kind, opt.with_ad});
  }
  const fs::path dir = opt.out_dir / "renders";
  fs::create_directories(dir);
  std::vector<RenderJob> jobs;
  for (std::size_t i = 0; i < sessions.size(); ++i)
    for (const auto& st : styles) jobs.push_back({i, st, render_file_name(sessions[i].session.session_id, st)});

  parallel_for(jobs.size(), opt.jobs, [&](std::size_t j) {
    const auto& job = jobs[j];
    const auto& s = sessions[job.session].session;
    try {
      write_file(dir / job.file, encode_png(render_session(s, job.style)));
    } catch (const Error& e) {
      fail(e.kind(), "session " + s.session_id + ": " + e.what());
    }
  });

  nlohmann::json entries = nlohmann::json::array();
  for (const auto& job : jobs)
    entries.push_back({{"file", job.file},
                       {"session_id", sessions[job.session].session.session_id},
                       {"style", style_tag(job.style)},
                       {"ad_format", to_string(sessions[job.session].session.ad_format)},
                       {"label", sessions[job.session].label}});
  nlohmann::json manifest{{"renders", entries}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  log << "rendered " << jobs.size() << " images to " << dir.string() << "\n";
  return manifest;
}

// ---------------------------------------------------------------------------
// encode (time-series CSV dump)

struct EncodeOptions {
  fs::path dataset;
  fs::path output;
};

inline void cmd_encode(const EncodeOptions& opt, std::ostream& log) {
  const auto sessions = load_dataset(opt.dataset);
  std::ostringstream csv;
  write_timeseries_csv_header(csv);
  for (const auto& s : sessions) write_timeseries_csv_row(csv, encode_timeseries(s));
  write_file(opt.output, csv.str());
  log << "encoded " << sessions.size() << " sessions\n";
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  fs::path dataset;   // JSON Lines sessions; split internally
  fs::path renders;   // or a render manifest (image representations only)
  fs::path out_dir;
  std::string arch = "gru";
  std::string repr = "timeseries";
  bool with_ad = false;
  int budget = 20;
  int repeats = 3;
  std::uint64_t seed = 0;
  std::vector<double> ratios{0.6, 0.1, 0.3};
  std::string by;
  int batch_size = 16;       // convolutional model
  int max_epochs = 0;        // 0 = per-architecture default
  int patience = 0;
  int lr_steps = 100;
  int jobs = 1;
};

struct TrainOutcome {
  EvalReport report;
  SearchResult search;
  fs::path model_path;
  fs::path log_path;
  fs::path report_path;
};

struct SplitData {
  Dataset train, val, test;
  std::string ad_format;  // shared by every test session, else "mixed"
};

inline std::string common_format(std::span<const LabeledSession> sessions) {
  if (sessions.empty()) return "";
  const auto f = sessions.front().session.ad_format;
  for (const auto& s : sessions)
    if (s.session.ad_format != f) return "mixed";
  return std::string(to_string(f));
}

inline SplitData datasets_from_sessions(const TrainOptions& opt, const Representation& repr) {
  const auto sessions = load_dataset(opt.dataset);
  const auto split = split_sessions(sessions, parse_ratios(opt.ratios), derive_seed(opt.seed, "split"), opt.by);
  return {build_dataset(split.train, repr, opt.jobs), build_dataset(split.val, repr, opt.jobs),
          build_dataset(split.test, repr, opt.jobs), common_format(split.test)};
}

inline SplitData datasets_from_manifest(const TrainOptions& opt, const Representation& repr) {
  const auto manifest = nlohmann::json::parse(read_file(opt.renders), nullptr, false);
  if (manifest.is_discarded() || !manifest.contains("renders")) fail(ErrorKind::MalformedInput, "bad render manifest");
  const std::string tag = repr.name();
  std::vector<std::string> files, ids, formats;
  std::vector<int> labels;
  for (const auto& e : manifest["renders"])
    if (e.at("style").get<std::string>() == tag) {
      files.push_back(e.at("file").get<std::string>());
      ids.push_back(e.at("session_id").get<std::string>());
      labels.push_back(e.at("label").get<int>());
      formats.push_back(e.value("ad_format", std::string{}));
    }
  if (files.empty()) fail(ErrorKind::EmptySet, "manifest has no renders for " + tag);
  const auto idx = stratified_split_indices(labels, parse_ratios(opt.ratios), derive_seed(opt.seed, "split"));
  const fs::path base = opt.renders.parent_path();
  std::array<Dataset, 3> parts;
  for (int p = 0; p < 3; ++p) {
    auto& d = parts[p];
    d.inputs.resize(idx.parts[p].size());
    parallel_for(idx.parts[p].size(), opt.jobs, [&](std::size_t i) {
      const std::string bytes = read_file(base / files[idx.parts[p][i]]);
      const auto img = decode_png({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
      d.inputs[i] = conv_input(img);
    });
    for (auto i : idx.parts[p]) {
      d.labels.push_back(labels[i]);
      d.ids.push_back(ids[i]);
    }
  }
  std::string fmt;
  for (std::size_t k = 0; k < idx.parts[2].size(); ++k) {
    const auto& f = formats[idx.parts[2][k]];
    fmt = k == 0 ? f : (fmt == f ? fmt : "mixed");
  }
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2]), fmt};
}

inline TrainOutcome cmd_train(const TrainOptions& opt, std::ostream& log) {
  const auto arch = parse_arch(opt.arch);
  if (!arch) fail(ErrorKind::InvalidValue, "unknown arch " + opt.arch);
  const auto repr = Representation::parse(opt.repr, opt.with_ad);
  check_combination(*arch, repr);
  const bool from_manifest = !opt.renders.empty();
  if (from_manifest && repr.is_timeseries()) fail(ErrorKind::InvalidValue, "a render manifest holds images only");
  if (!from_manifest && opt.dataset.empty()) fail(ErrorKind::InvalidValue, "--dataset or --renders is required");

  auto data = from_manifest ? datasets_from_manifest(opt, repr) : datasets_from_sessions(opt, repr);
  if (data.train.empty() || data.val.empty() || data.test.empty())
    fail(ErrorKind::EmptySet, "every split needs at least one sample");
  log << "train " << data.train.size() << ", val " << data.val.size() << ", test " << data.test.size() << "\n";

  TrainOutcome out;
  SearchOptions so;
  so.arch = *arch;
  so.input = input_shape_for(repr);
  so.seed = derive_seed(opt.seed, "search");
  so.jobs = opt.jobs;
  if (is_recurrent(*arch)) {
    SearchSpace space;
    space.budget = opt.budget;
    so.repeats = opt.repeats;
    so.max_epochs = opt.max_epochs > 0 ? opt.max_epochs : kRecurrentMaxEpochs;
    so.patience = opt.patience > 0 ? opt.patience : kRecurrentPatience;
    so.monitor = Monitor::ValLoss;
    out.search = random_search(space, data.train, data.val, so);
  } else {
    // One range test picks a constant learning rate, then a single fit
    // monitored on validation AUC.
    ModelSpec spec{*arch, 16, 0.2, so.input, derive_seed(so.seed, "model")};
    const auto lr = lr_range_test(spec, data.train, 1e-6, 1e-1, opt.lr_steps, opt.batch_size,
                                  derive_seed(so.seed, "lr"), opt.jobs);
    log << "lr range test suggests eta = " << lr.suggested_eta << "\n";
    TrainConfig cfg = TrainConfig::convolutional(lr.suggested_eta, opt.batch_size, derive_seed(so.seed, "train"));
    if (opt.max_epochs > 0) cfg.max_epochs = opt.max_epochs;
    if (opt.patience > 0) cfg.patience = opt.patience;
    cfg.jobs = opt.jobs;
    const auto t0 = std::chrono::steady_clock::now();
    auto result = fit(init_model(spec), data.train, data.val, cfg);
    TrialRecord rec;
    rec.spec = spec;
    rec.config = cfg;
    rec.val_loss = result.history.epochs[static_cast<std::size_t>(result.history.best_epoch - 1)].val_loss;
    rec.history = result.history;
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out.search.best_spec = spec;
    out.search.best_config = cfg;
    out.search.trial_mean_val_loss = {rec.val_loss};
    out.search.log.push_back(std::move(rec));
    out.search.best_model = std::move(result.model);
  }

  const std::string stem = opt.arch + "-" + repr.name();
  out.model_path = opt.out_dir / "models" / (stem + ".model");
  out.log_path = opt.out_dir / "logs" / (stem + "-trials.jsonl");
  out.report_path = opt.out_dir / "reports" / (stem + ".json");

  std::ostringstream model_bytes;
  save_model(model_bytes, out.search.best_model);
  write_file(out.model_path, model_bytes.str());

  std::ostringstream trials;
  for (const auto& r : out.search.log) trials << to_json(r).dump() << "\n";
  write_file(out.log_path, trials.str());

  const auto scores = predict_all(out.search.best_model, data.test, opt.jobs);
  out.report = make_report(stem, repr.name(), data.test.ids, scores, data.test.labels);
  out.report.ad_format = data.ad_format;
  out.report.placeholder = repr.style && repr.style->with_ad_placeholder;
  out.report.config = {{"spec", to_json(out.search.best_spec)},
                       {"train", to_json(out.search.best_config)},
                       {"arch", opt.arch},
                       {"seed", opt.seed},
                       {"budget", opt.budget},
                       {"repeats", opt.repeats}};
  write_file(out.report_path, to_json(out.report).dump(2) + "\n");

  log << "winner: eta=" << out.search.best_config.eta << " n=" << out.search.best_spec.hidden_n
      << " q=" << out.search.best_spec.drop_rate << " b=" << out.search.best_config.batch_size << "\n";
  log << std::fixed << std::setprecision(4) << "test AUC " << out.report.auc << ", weighted P/R/F1 "
      << out.report.weighted_precision << "/" << out.report.weighted_recall << "/" << out.report.weighted_f1 << "\n";
  log.unsetf(std::ios::fixed);
  return out;
}

// ---------------------------------------------------------------------------
// compare

struct CompareCliOptions {
  std::vector<fs::path> reports;
  fs::path output;
  std::string factor = "report";
  std::string metric = "auc";
};

inline nlohmann::json cmd_compare(const CompareCliOptions& opt, std::ostream& log) {
  if (opt.reports.size() < 2) fail(ErrorKind::TooFewReports, "need at least 2 report files");
  std::vector<EvalReport> reports;
  std::vector<std::string> names;
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& path : opt.reports) {
    const std::string text = read_file(path);
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) fail(ErrorKind::MalformedInput, path.string() + ": not valid JSON");
    reports.push_back(report_from_json(j));
    names.push_back(path.stem().string());
    inputs.push_back({{"file", path.string()}, {"sha256", sha256_hex(text)}});
  }
  const auto outcome = compare_reports(reports, names, {opt.factor, opt.metric});
  auto result = to_json(outcome);
  result["inputs"] = inputs;
  result["factor"] = opt.factor;
  result["metric"] = opt.metric;
  if (!opt.output.empty()) write_file(opt.output, result.dump(2) + "\n");

  log << std::setprecision(4);
  if (outcome.omnibus)
    log << "friedman chi2=" << outcome.omnibus->statistic << " p=" << outcome.omnibus->p_value << " (k="
        << outcome.matrix.treatments.size() << ", blocks=" << outcome.omnibus->n << ")\n";
  if (!outcome.note.empty()) log << outcome.note << "\n";
  if (!outcome.pairwise.empty()) {
    log << std::left << std::setw(24) << "a" << std::setw(24) << "b" << std::setw(10) << "W" << std::setw(12) << "p"
        << std::setw(12) << "p_holm" << "r\n";
    for (const auto& p : outcome.pairwise)
      log << std::setw(24) << p.a << std::setw(24) << p.b << std::setw(10) << p.result.statistic << std::setw(12)
          << p.result.p_value << std::setw(12) << *p.result.corrected_p << *p.result.effect_r << "\n";
  }
  return result;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  fs::path output;
  int sessions = 500;
  double positive_fraction = 0.5;
  double noise_px = 4.0;
  std::uint64_t seed = 0;
};

inline void cmd_synth(const SynthOptions& opt, std::ostream& log) {
  SyntheticOptions so;
  so.sessions = opt.sessions;
  so.positive_fraction = opt.positive_fraction;
  so.noise_px = opt.noise_px;
  so.seed = derive_seed(opt.seed, "synth");
  std::ostringstream out;
  for (const auto& s : synthesize_corpus(so)) out << to_json(s).dump() << "\n";
  write_file(opt.output, out.str());
  log << "wrote " << opt.sessions << " synthetic session logs\n";
}

// ---------------------------------------------------------------------------
// run: batch workflow from a JSON manifest
//
//   {"dataset": "data.jsonl", "out": "out", "seed": 7, "ratios": [0.6, 0.1, 0.3],
//    "runs": [{"arch": "gru", "repr": "timeseries"}, {"arch": "cnn", "repr": "traj-ad"}],
//    "budget": 20, "repeats": 3}
//
// Trains every listed run, then compares the resulting reports when there
// are at least two.

struct RunOptions {
  fs::path manifest;
  int jobs = 1;
};

inline nlohmann::json cmd_run(const RunOptions& opt, std::ostream& log) {
  const auto m = nlohmann::json::parse(read_file(opt.manifest), nullptr, false);
  if (m.is_discarded() || !m.is_object()) fail(ErrorKind::MalformedInput, opt.manifest.string() + ": not a JSON object");
  const fs::path base = opt.manifest.parent_path();
  const auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  std::vector<fs::path> reports;
  try {
    TrainOptions t;
    t.dataset = resolve(m.at("dataset").get<std::string>());
    if (!fs::exists(t.dataset)) fail(ErrorKind::IOFailure, "dataset not found: " + t.dataset.string());
    t.out_dir = resolve(m.value("out", "out"));
    t.seed = m.value("seed", std::uint64_t{0});
    t.ratios = m.value("ratios", t.ratios);
    t.by = m.value("by", std::string{});
    t.budget = m.value("budget", t.budget);
    t.repeats = m.value("repeats", t.repeats);
    t.max_epochs = m.value("max_epochs", 0);
    t.patience = m.value("patience", 0);
    t.jobs = opt.jobs;
    fs::create_directories(t.out_dir);
    for (const auto& r : m.at("runs")) {
      TrainOptions one = t;
      one.arch = r.at("arch").get<std::string>();
      one.repr = r.at("repr").get<std::string>();
      log << "== " << one.arch << " on " << one.repr << "\n";
      reports.push_back(cmd_train(one, log).report_path);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::MalformedInput, opt.manifest.string() + ": " + e.what());
  }
  nlohmann::json summary{{"reports", nlohmann::json::array()}};
  for (const auto& r : reports) summary["reports"].push_back(r.string());
  if (reports.size() >= 2) {
    CompareCliOptions c;
    c.reports = reports;
    c.output = resolve(m.value("out", "out")) / "reports" / "comparison.json";
    summary["comparison"] = cmd_compare(c, log);
  }
  return summary;
}

}  // namespace cursor_attn::cli
