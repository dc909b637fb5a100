#pragma once

// CLI11 front-end over the pipeline commands. run_cli takes argv-style
// arguments (program name excluded) and parameterized streams so tests can
// drive the binary's exact surface in-process.

#include <algorithm>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ambiscore/pipeline.hpp"

namespace ambiscore {

namespace detail {

struct SubArgs {
  std::string config_path;
  CliOverrides overrides;
  std::optional<std::string> index_dir;
  std::optional<std::string> thresholds_path;
  std::vector<std::string> strategies;
  std::vector<std::string> run_dirs;  // report positionals
};

inline void add_common_options(CLI::App* sub, SubArgs& a,
                               bool config_required) {
  auto* config =
      sub->add_option("--config", a.config_path, "run configuration JSON");
  if (config_required) config->required()->check(CLI::ExistingFile);
  sub->add_option("--cache-dir", a.overrides.cache_dir,
                  "gateway cache directory (overrides config)");
  sub->add_option("--seed", a.overrides.seed,
                  "deterministic seed (overrides config)");
  sub->add_option("--out", a.overrides.out_dir,
                  "output directory (overrides config)");
}

inline RunConfig effective_config(const SubArgs& a) {
  RunConfig config;
  if (!a.config_path.empty()) config = RunConfig::load(a.config_path);
  apply_overrides(config, a.overrides);
  if (a.index_dir) config.index_dir = *a.index_dir;
  if (a.thresholds_path) config.thresholds_path = *a.thresholds_path;
  if (!a.strategies.empty()) config.sft.strategies = a.strategies;
  return config;
}

}  // namespace detail

inline int run_cli(std::vector<std::string> args,
                   std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"plausibility scoring for homonym senses in short stories",
               "ambiscore"};
  app.require_subcommand(1);

  std::map<std::string, detail::SubArgs> sub_args;
  auto* ingest = app.add_subcommand("ingest", "parse and summarize datasets");
  auto* calibrate = app.add_subcommand(
      "calibrate", "fit difficulty thresholds to target category counts");
  auto* index = app.add_subcommand(
      "index", "embed the train split into per-category retrieval indexes");
  auto* infer =
      app.add_subcommand("infer", "score a split through the chat gateway");
  auto* ensemble_fit = app.add_subcommand(
      "ensemble-fit", "fit an ensemble over base run records");
  auto* ensemble_predict = app.add_subcommand(
      "ensemble-predict", "apply a fitted ensemble to run records");
  auto* eval =
      app.add_subcommand("eval", "evaluate run records against gold labels");
  auto* export_sft = app.add_subcommand(
      "export-sft", "emit fine-tuning datasets in chat format");
  auto* report = app.add_subcommand(
      "report", "tabulate eval reports across run directories");
  auto* mock_serve = app.add_subcommand(
      "mock-serve", "serve the scriptable offline chat/embedding endpoint");

  for (CLI::App* sub : {ingest, calibrate, index, infer, ensemble_fit,
                        ensemble_predict, eval, export_sft})
    detail::add_common_options(sub, sub_args[sub->get_name()], true);
  detail::add_common_options(report, sub_args["report"], false);
  detail::add_common_options(mock_serve, sub_args["mock-serve"], false);

  {
    auto& a = sub_args["infer"];
    infer->add_option("--split", a.overrides.split,
                      "dataset split to score (train|dev|test)");
    infer->add_option("--mode", a.overrides.mode,
                      "prompting mode (zero_shot|few_shot)");
    infer->add_option("--k", a.overrides.k, "few-shot examples per category");
    infer->add_option("--limit", a.overrides.limit,
                      "score only the first N instances");
    infer->add_option("--index-dir", a.index_dir,
                      "directory holding the retrieval indexes");
  }
  {
    auto& a = sub_args["eval"];
    eval->add_option("--split", a.overrides.split,
                     "labeled split to evaluate against");
    eval->add_option("--records", a.overrides.records_path,
                     "run records file (defaults to <out>/run_records.jsonl)");
    eval->add_option("--thresholds", a.thresholds_path,
                     "thresholds file for the per-category breakdown");
  }
  {
    auto& a = sub_args["ensemble-fit"];
    ensemble_fit->add_option("--kind", a.overrides.kind,
                             "ensemble kind (majority_vote|equal_weight|"
                             "perf_weight|linear|svr|gbt)");
    ensemble_fit->add_option("--split", a.overrides.split,
                             "labeled split providing fit targets");
  }
  {
    auto& a = sub_args["ensemble-predict"];
    ensemble_predict->add_option("--model", a.overrides.model_path,
                                 "fitted ensemble model JSON");
  }
  {
    auto& a = sub_args["export-sft"];
    export_sft->add_option("--strategy", a.strategies,
                           "strategy to export (repeatable; default all)");
    export_sft->add_option("--thresholds", a.thresholds_path,
                           "thresholds file for difficulty-tagged records");
  }
  {
    auto& a = sub_args["report"];
    report->add_option("dirs", a.run_dirs, "run directories to tabulate")
        ->required();
  }
  {
    auto& a = sub_args["mock-serve"];
    mock_serve->add_option("--script", a.overrides.mock_script,
                           "mock behavior script JSON");
    mock_serve->add_option("--port", a.overrides.port,
                           "port to bind (0 = ephemeral)");
    mock_serve->add_option("--serve-seconds", a.overrides.serve_seconds,
                           "stop after this many seconds (0 = run forever)");
  }

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  const CLI::App* active = app.get_subcommands().front();
  const std::string name = active->get_name();
  try {
    const detail::SubArgs& a = sub_args[name];
    if (name == "report")
      return pipeline::cmd_report(
          a.run_dirs, a.overrides.out_dir.value_or(""), out, err);
    RunConfig config = detail::effective_config(a);
    if (name == "ingest") return pipeline::cmd_ingest(config, out, err);
    if (name == "calibrate") return pipeline::cmd_calibrate(config, out, err);
    if (name == "index") return pipeline::cmd_index(config, out, err);
    if (name == "infer") return pipeline::cmd_infer(config, out, err);
    if (name == "ensemble-fit")
      return pipeline::cmd_ensemble_fit(config, out, err);
    if (name == "ensemble-predict")
      return pipeline::cmd_ensemble_predict(config, out, err);
    if (name == "eval") return pipeline::cmd_eval(config, out, err);
    if (name == "export-sft") return pipeline::cmd_export_sft(config, out, err);
    if (name == "mock-serve") return pipeline::cmd_mock_serve(config, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  err << "error: unknown subcommand " << name << "\n";
  return 2;
}

}  // namespace ambiscore
