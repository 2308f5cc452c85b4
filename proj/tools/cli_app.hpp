#pragma once

// Argument parsing for the cursor_attn binary. run_cli() is the whole
// program minus process setup, so tests can drive it in-process.

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"

namespace cursor_attn::cli {

inline int default_jobs() {
  if (const char* env = std::getenv("CURSOR_ATTN_JOBS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    fail(ErrorKind::InvalidValue, "CURSOR_ATTN_JOBS must be a positive integer");
  }
  return 1;
}

namespace detail {

inline std::string scalar_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

// Appends `--key value...` for every config entry the active command knows
// and the command line did not already set. Top-level keys apply to any
// command that has the option; a nested object named after the command
// applies to it alone and must only hold known options.
inline void apply_config(const fs::path& file, CLI::App* cmd, const std::vector<std::string>& given,
                         std::vector<std::string>& args) {
  const auto doc = nlohmann::json::parse(read_file(file), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) fail(ErrorKind::MalformedInput, file.string() + ": not a JSON object");
  const auto add = [&](const std::string& key, const nlohmann::json& v, bool strict) {
    const std::string flag = "--" + key;
    if (cmd->get_option_no_throw(flag) == nullptr) {
      if (strict) fail(ErrorKind::InvalidValue, file.string() + ": unknown option '" + key + "' for " + cmd->get_name());
      return;
    }
    if (std::find(given.begin(), given.end(), flag) != given.end()) return;
    if (v.is_boolean()) {
      if (v.get<bool>()) args.push_back(flag);
      return;
    }
    args.push_back(flag);
    if (v.is_array()) {
      for (const auto& e : v) args.push_back(scalar_text(e));
    } else {
      args.push_back(scalar_text(v));
    }
  };
  for (const auto& [key, v] : doc.items())
    if (!(v.is_object() && key == cmd->get_name())) add(key, v, false);
  if (doc.contains(cmd->get_name()) && doc[cmd->get_name()].is_object())
    for (const auto& [key, v] : doc[cmd->get_name()].items()) add(key, v, true);
}

}  // namespace detail

inline int run_cli(std::vector<std::string> argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Cursor-movement attention classifier pipeline", "cursor_attn"};
  app.require_subcommand(1);
  std::string config_path;
  int jobs = 1;

  IngestOptions ingest;
  SplitOptions split;
  RenderOptions render;
  EncodeOptions encode;
  TrainOptions train;
  CompareCliOptions compare;
  SynthOptions synth;
  RunOptions run;

  const auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON file supplying default flag values");
    cmd->add_option("--jobs", jobs, "worker threads (default: $CURSOR_ATTN_JOBS or 1)")->check(CLI::PositiveNumber);
  };

  auto* c_ingest = app.add_subcommand("ingest", "parse session logs into a cleaned JSON Lines dataset");
  c_ingest->add_option("inputs", ingest.inputs, "log files (.json / .jsonl) or directories")->required();
  c_ingest->add_option("-o,--output", ingest.output, "dataset file to write")->required();
  c_ingest->add_option("--min-events", ingest.min_events, "minimum distinct mouse moves")->check(CLI::NonNegativeNumber);
  common(c_ingest);

  auto* c_split = app.add_subcommand("split", "stratified train/val/test split");
  c_split->add_option("dataset", split.dataset)->required();
  c_split->add_option("-o,--out", split.out_dir, "directory for train/val/test.jsonl")->required();
  c_split->add_option("--ratios", split.ratios)->expected(3);
  c_split->add_option("--seed", split.seed);
  c_split->add_option("--by", split.by, "stratify within groups")->check(CLI::IsMember({"ad_format"}));
  common(c_split);

  auto* c_render = app.add_subcommand("render", "rasterize sessions to PNG");
  c_render->add_option("dataset", render.dataset)->required();
  c_render->add_option("-o,--out", render.out_dir, "output root; files go to <out>/renders")->required();
  c_render->add_option("--style", render.style, "heatmap | traj | traj-color | traj-thick | traj-color-thick");
  c_render->add_flag("--ad", render.with_ad, "overlay the ad placeholder");
  c_render->add_flag("--all-styles", render.all_styles, "all five styles with and without placeholder");
  common(c_render);

  auto* c_encode = app.add_subcommand("encode", "dump the 50x2 time-series encoding as CSV");
  c_encode->add_option("dataset", encode.dataset)->required();
  c_encode->add_option("-o,--output", encode.output)->required();
  common(c_encode);

  auto* c_train = app.add_subcommand("train", "train a model and write model, trial log and test report");
  auto* o_dataset = c_train->add_option("--dataset", train.dataset, "cleaned dataset (split internally)");
  c_train->add_option("--renders", train.renders, "render manifest.json (image representations)")->excludes(o_dataset);
  c_train->add_option("-o,--out", train.out_dir)->required();
  c_train->add_option("--arch", train.arch, "simplernn | lstm | blstm | gru | cnn");
  c_train->add_option("--repr", train.repr, "timeseries or a render style, optionally with -ad");
  c_train->add_flag("--ad", train.with_ad, "use the placeholder variant of --repr");
  c_train->add_option("--budget", train.budget, "random search trials")->check(CLI::PositiveNumber);
  c_train->add_option("--k,--repeats", train.repeats, "fits per trial")->check(CLI::PositiveNumber);
  c_train->add_option("--seed", train.seed);
  c_train->add_option("--ratios", train.ratios)->expected(3);
  c_train->add_option("--by", train.by)->check(CLI::IsMember({"ad_format"}));
  c_train->add_option("--batch-size", train.batch_size, "conv batch size")->check(CLI::IsMember({16, 32, 64}));
  c_train->add_option("--max-epochs", train.max_epochs, "override the epoch cap")->check(CLI::PositiveNumber);
  c_train->add_option("--patience", train.patience, "override early-stopping patience")->check(CLI::PositiveNumber);
  c_train->add_option("--lr-steps", train.lr_steps, "learning-rate range test steps")->check(CLI::Range(2, 100000));
  common(c_train);

  auto* c_compare = app.add_subcommand("compare", "significance tests across evaluation reports");
  c_compare->add_option("reports", compare.reports)->required();
  c_compare->add_option("-o,--output", compare.output, "comparison JSON");
  c_compare->add_option("--factor", compare.factor, "report | model_id | representation | ad_format | placeholder");
  c_compare->add_option("--metric", compare.metric, "auc | f1 | precision | recall");
  common(c_compare);

  auto* c_synth = app.add_subcommand("synth", "generate synthetic session logs with a known attention signal");
  c_synth->add_option("-o,--output", synth.output)->required();
  c_synth->add_option("--sessions", synth.sessions)->check(CLI::PositiveNumber);
  c_synth->add_option("--positive-fraction", synth.positive_fraction)->check(CLI::Range(0.0, 1.0));
  c_synth->add_option("--noise", synth.noise_px)->check(CLI::NonNegativeNumber);
  c_synth->add_option("--seed", synth.seed);
  common(c_synth);

  auto* c_run = app.add_subcommand("run", "train every run listed in a JSON manifest, then compare");
  c_run->add_option("manifest", run.manifest)->required();
  common(c_run);

  try {
    jobs = default_jobs();
    // Locate the command and its --config before the real parse.
    CLI::App* cmd = nullptr;
    std::vector<std::string> given;
    for (std::size_t i = 0; i < argv.size(); ++i) {
      if (!cmd && !argv[i].empty() && argv[i][0] != '-') {
        cmd = app.get_subcommand_no_throw(argv[i]);
        continue;
      }
      const auto eq = argv[i].find('=');
      given.push_back(argv[i].substr(0, eq));
      if (argv[i] == "--config" && i + 1 < argv.size()) config_path = argv[i + 1];
      else if (argv[i].rfind("--config=", 0) == 0) config_path = argv[i].substr(9);
    }
    if (cmd && !config_path.empty()) detail::apply_config(config_path, cmd, given, argv);

    std::reverse(argv.begin(), argv.end());
    try {
      app.parse(argv);
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) {
        out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return 0;
      }
      err << "error:" << kind_name(ErrorKind::InvalidValue) << ": " << e.what() << "\n";
      return 2;
    }
    train.jobs = render.jobs = run.jobs = jobs;

    if (c_ingest->parsed()) cmd_ingest(ingest, out);
    else if (c_split->parsed()) cmd_split(split, out);
    else if (c_render->parsed()) cmd_render(render, out);
    else if (c_encode->parsed()) cmd_encode(encode, out);
    else if (c_train->parsed()) cmd_train(train, out);
    else if (c_compare->parsed()) cmd_compare(compare, out);
    else if (c_synth->parsed()) cmd_synth(synth, out);
    else if (c_run->parsed()) cmd_run(run, out);
    return 0;
  } catch (const Error& e) {
    err << "error:" << kind_name(e.kind()) << ": " << e.what() << "\n";
  } catch (const fs::filesystem_error& e) {
    err << "error:" << kind_name(ErrorKind::IOFailure) << ": " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error:" << kind_name(ErrorKind::InvalidValue) << ": " << e.what() << "\n";
  }
  return 1;
}

}  // namespace cursor_attn::cli
