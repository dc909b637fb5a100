#pragma once

// Run configuration and the subcommand implementations behind the CLI.
// Every command writes its artifacts under the configured output directory
// together with a snapshot of the effective config, so a persisted config
// plus a warm cache reproduces a run byte-identically.

#include <algorithm>
#include <array>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ambiscore/common.hpp"
#include "ambiscore/corpus.hpp"
#include "ambiscore/difficulty.hpp"
#include "ambiscore/ensemble.hpp"
#include "ambiscore/gateway.hpp"
#include "ambiscore/metrics.hpp"
#include "ambiscore/mock_server.hpp"
#include "ambiscore/prompting.hpp"
#include "ambiscore/retrieval.hpp"
#include "ambiscore/run_record.hpp"
#include "ambiscore/sft_export.hpp"

namespace ambiscore {

struct DatasetConfig {
  std::string train_path;
  std::string dev_path;
  std::string test_path;
  FieldMapping field_map;
  bool require_labels = false;

  static DatasetConfig from_json(const json& j) {
    DatasetConfig c;
    c.train_path = j.value("train_path", "");
    c.dev_path = j.value("dev_path", "");
    c.test_path = j.value("test_path", "");
    if (j.contains("field_map"))
      c.field_map = FieldMapping::from_json(j.at("field_map"));
    c.require_labels = j.value("require_labels", false);
    return c;
  }

  json to_json() const {
    return json{{"train_path", train_path},
                {"dev_path", dev_path},
                {"test_path", test_path},
                {"field_map", field_map.to_json()},
                {"require_labels", require_labels}};
  }
};

struct EnsembleConfig {
  std::string kind = "linear";
  std::vector<std::string> run_files;   // RunRecord files, one per base model
  std::vector<std::string> run_names;   // column names; defaults to file stems
  std::string model_path;               // read by ensemble-predict
  bool cv = true;                       // report 5-fold CV of the fitted kind
  std::optional<SvrParams> svr_params;  // fixed point instead of grid search

  static EnsembleConfig from_json(const json& j) {
    EnsembleConfig c;
    c.kind = j.value("kind", c.kind);
    c.run_files = j.value("run_files", c.run_files);
    c.run_names = j.value("run_names", c.run_names);
    c.model_path = j.value("model_path", c.model_path);
    c.cv = j.value("cv", c.cv);
    if (j.contains("svr_params")) {
      const auto& p = j.at("svr_params");
      c.svr_params = SvrParams{p.at("C").get<double>(),
                               p.at("epsilon").get<double>(),
                               p.at("gamma").get<double>()};
    }
    return c;
  }

  json to_json() const {
    json j{{"kind", kind},
           {"run_files", run_files},
           {"run_names", run_names},
           {"model_path", model_path},
           {"cv", cv}};
    if (svr_params)
      j["svr_params"] = {{"C", svr_params->C},
                         {"epsilon", svr_params->epsilon},
                         {"gamma", svr_params->gamma}};
    return j;
  }
};

struct SftConfig {
  std::vector<std::string> strategies;  // empty means all four
  std::string sense_hints_path;         // JSON object: instance id -> gloss
  std::string split = "train";

  static SftConfig from_json(const json& j) {
    SftConfig c;
    c.strategies = j.value("strategies", c.strategies);
    c.sense_hints_path = j.value("sense_hints_path", c.sense_hints_path);
    c.split = j.value("split", c.split);
    return c;
  }

  json to_json() const {
    return json{{"strategies", strategies},
                {"sense_hints_path", sense_hints_path},
                {"split", split}};
  }
};

struct RunConfig {
  DatasetConfig dataset;
  GatewayConfig gateway;
  std::string mode = "zero_shot";  // "zero_shot" | "few_shot"
  std::size_t k = 1;               // examples per category in few-shot mode
  std::string split = "dev";       // split that infer/eval operate on
  std::string thresholds_path;     // defaults to <out_dir>/thresholds.json
  std::string index_dir;           // defaults to out_dir
  std::string records_path;        // defaults to <out_dir>/run_records.jsonl
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::size_t limit = 0;  // >0 scores only the first N instances (live smoke)
  std::string std_convention = "sample";
  std::array<std::size_t, 3> calibration_targets = {1088, 631, 561};
  std::optional<CalibrationGrid> calibration_grid;  // empty = default grid
  EmbedTextOptions embed;
  PromptOptions prompt;
  EnsembleConfig ensemble;
  SftConfig sft;
  std::string mock_script;  // mock-serve script path
  int port = 0;             // mock-serve port (0 = ephemeral)
  int serve_seconds = 0;    // mock-serve lifetime (0 = until interrupted)

  static RunConfig from_json(const json& j) {
    RunConfig c;
    if (j.contains("dataset"))
      c.dataset = DatasetConfig::from_json(j.at("dataset"));
    if (j.contains("gateway"))
      c.gateway = GatewayConfig::from_json(j.at("gateway"));
    c.mode = j.value("mode", c.mode);
    c.k = j.value("k", c.k);
    c.split = j.value("split", c.split);
    c.thresholds_path = j.value("thresholds_path", c.thresholds_path);
    c.index_dir = j.value("index_dir", c.index_dir);
    c.records_path = j.value("records_path", c.records_path);
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.limit = j.value("limit", c.limit);
    c.std_convention = j.value("std_convention", c.std_convention);
    if (j.contains("calibration_targets")) {
      const auto t = j.at("calibration_targets");
      if (!t.is_array() || t.size() != 3)
        throw ConfigError(
            "calibration_targets must be [ambiguous, high, low]");
      for (int i = 0; i < 3; ++i)
        c.calibration_targets[static_cast<std::size_t>(i)] =
            t.at(i).get<std::size_t>();
    }
    if (j.contains("calibration_grid"))
      c.calibration_grid = CalibrationGrid::from_json(j.at("calibration_grid"));
    if (j.contains("embed")) {
      c.embed.include_ending =
          j.at("embed").value("include_ending", c.embed.include_ending);
      c.embed.include_meaning =
          j.at("embed").value("include_meaning", c.embed.include_meaning);
    }
    if (j.contains("prompt"))
      c.prompt.raw_mean_labels =
          j.at("prompt").value("raw_mean_labels", c.prompt.raw_mean_labels);
    if (j.contains("ensemble"))
      c.ensemble = EnsembleConfig::from_json(j.at("ensemble"));
    if (j.contains("sft")) c.sft = SftConfig::from_json(j.at("sft"));
    c.mock_script = j.value("mock_script", c.mock_script);
    c.port = j.value("port", c.port);
    c.serve_seconds = j.value("serve_seconds", c.serve_seconds);
    return c;
  }

  json to_json() const {
    json j{{"dataset", dataset.to_json()},
           {"gateway", gateway.to_json()},
           {"mode", mode},
           {"k", k},
           {"split", split},
           {"thresholds_path", thresholds_path},
           {"index_dir", index_dir},
           {"records_path", records_path},
           {"seed", seed},
           {"out_dir", out_dir},
           {"limit", limit},
           {"std_convention", std_convention},
           {"calibration_targets",
            {calibration_targets[0], calibration_targets[1],
             calibration_targets[2]}},
           {"embed",
            {{"include_ending", embed.include_ending},
             {"include_meaning", embed.include_meaning}}},
           {"prompt", {{"raw_mean_labels", prompt.raw_mean_labels}}},
           {"ensemble", ensemble.to_json()},
           {"sft", sft.to_json()},
           {"mock_script", mock_script},
           {"port", port},
           {"serve_seconds", serve_seconds}};
    if (calibration_grid) j["calibration_grid"] = calibration_grid->to_json();
    return j;
  }

  static RunConfig load(const std::string& path) {
    json j;
    try {
      j = json::parse(read_file(path));
    } catch (const json::exception& e) {
      throw ConfigError("config " + path + ": " + e.what());
    }
    try {
      return from_json(j);
    } catch (const json::exception& e) {
      throw ConfigError("config " + path + ": " + e.what());
    }
  }
};

// Flag values layered over the config file.
struct CliOverrides {
  std::optional<std::string> cache_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> limit;
  std::optional<std::string> split;
  std::optional<std::string> mode;
  std::optional<std::size_t> k;
  std::optional<std::string> records_path;
  std::optional<std::string> kind;
  std::optional<std::string> model_path;
  std::optional<std::string> mock_script;
  std::optional<int> port;
  std::optional<int> serve_seconds;
};

inline void apply_overrides(RunConfig& config, const CliOverrides& o) {
  if (o.cache_dir) config.gateway.cache_dir = *o.cache_dir;
  if (o.seed) config.seed = *o.seed;
  if (o.out_dir) config.out_dir = *o.out_dir;
  if (o.limit) config.limit = *o.limit;
  if (o.split) config.split = *o.split;
  if (o.mode) config.mode = *o.mode;
  if (o.k) config.k = *o.k;
  if (o.records_path) config.records_path = *o.records_path;
  if (o.kind) config.ensemble.kind = *o.kind;
  if (o.model_path) config.ensemble.model_path = *o.model_path;
  if (o.mock_script) config.mock_script = *o.mock_script;
  if (o.port) config.port = *o.port;
  if (o.serve_seconds) config.serve_seconds = *o.serve_seconds;
}

namespace pipeline {

namespace fs = std::filesystem;

inline void write_text_file(const fs::path& path, const std::string& body) {
  atomic_write_file(path, body);
}

inline void write_json_file(const fs::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

// Every command starts by snapshotting its effective configuration.
inline void snapshot_config(const RunConfig& config) {
  fs::create_directories(config.out_dir);
  write_json_file(fs::path(config.out_dir) / "config_snapshot.json",
                  config.to_json());
}

inline std::string split_path(const RunConfig& config,
                              const std::string& split) {
  if (split == "train") return config.dataset.train_path;
  if (split == "dev") return config.dataset.dev_path;
  if (split == "test") return config.dataset.test_path;
  throw ConfigError("unknown split: " + split +
                    " (expected train, dev, or test)");
}

struct LoadedSplit {
  std::vector<StoryInstance> instances;
  std::vector<RecordIssue> issues;
  std::string dataset_hash;  // sha256 of the raw file bytes
  std::string path;
};

inline LoadedSplit load_split(const RunConfig& config, const std::string& split,
                              bool require_labels) {
  LoadedSplit out;
  out.path = split_path(config, split);
  if (out.path.empty())
    throw ConfigError("no dataset path configured for split '" + split + "'");
  const std::string raw = read_file(out.path);
  out.dataset_hash = sha256_hex(raw);
  ParseOptions opts;
  opts.field_map = config.dataset.field_map;
  opts.require_labels = require_labels;
  ParseResult parsed =
      parse_dataset(raw, split_from_name(split), opts);
  out.instances = std::move(parsed.instances);
  out.issues = std::move(parsed.issues);
  return out;
}

inline StdConvention convention_of(const RunConfig& config) {
  return std_convention_from_name(config.std_convention);
}

inline std::map<std::string, AnnotationStats> stats_of(
    const std::vector<StoryInstance>& instances) {
  std::map<std::string, AnnotationStats> stats;
  for (const auto& inst : instances)
    if (inst.labeled()) stats[inst.id] = annotation_stats(inst.annotations);
  return stats;
}

inline fs::path thresholds_file(const RunConfig& config) {
  if (!config.thresholds_path.empty()) return config.thresholds_path;
  return fs::path(config.out_dir) / "thresholds.json";
}

inline CategoryThresholds load_thresholds(const RunConfig& config) {
  const fs::path path = thresholds_file(config);
  if (!fs::exists(path))
    throw ConfigError("thresholds file " + path.string() +
                      " not found (run calibrate first or set "
                      "thresholds_path)");
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("thresholds " + path.string() + ": " + e.what());
  }
  return CategoryThresholds::from_json(
      j.contains("thresholds") ? j.at("thresholds") : j);
}

inline void write_gateway_stats(const RunConfig& config,
                                const Gateway& gateway) {
  // Kept apart from the run artifacts on purpose: call counters differ
  // between a cold and a warm run, while everything else must not.
  write_json_file(fs::path(config.out_dir) / "gateway_stats.json",
                  json{{"network_calls", gateway.network_calls()},
                       {"cache_hits", gateway.cache_hits()}});
}

// ---------------------------------------------------------------------------

inline int cmd_ingest(const RunConfig& config, std::ostream& out,
                      std::ostream& err) {
  snapshot_config(config);
  json report = json::object();
  std::size_t splits_seen = 0;
  for (const std::string split : {"train", "dev", "test"}) {
    if (split_path(config, split).empty()) continue;
    ++splits_seen;
    LoadedSplit loaded;
    try {
      loaded = load_split(config, split, config.dataset.require_labels);
    } catch (const std::exception& e) {
      err << "error: split " << split << ": " << e.what() << "\n";
      return 2;
    }
    const DatasetSummary summary = summarize_dataset(loaded.instances);
    json issues = json::array();
    for (const auto& issue : loaded.issues)
      issues.push_back({{"line", issue.line},
                        {"message", issue.message},
                        {"rejected", issue.rejected}});
    report[split] = {{"path", loaded.path},
                     {"dataset_hash", loaded.dataset_hash},
                     {"count", summary.count},
                     {"labeled", summary.labeled},
                     {"distinct_homonyms", summary.distinct_homonyms},
                     {"rejected", std::count_if(loaded.issues.begin(),
                                                loaded.issues.end(),
                                                [](const RecordIssue& i) {
                                                  return i.rejected;
                                                })},
                     {"issues", std::move(issues)}};
    out << split << ": " << summary.count << " instances (" << summary.labeled
        << " labeled, " << summary.distinct_homonyms
        << " distinct homonyms), " << report[split]["rejected"]
        << " rejected\n";
  }
  if (splits_seen == 0) {
    err << "error: no dataset paths configured\n";
    return 2;
  }
  write_json_file(fs::path(config.out_dir) / "ingest_report.json", report);
  return 0;
}

inline int cmd_calibrate(const RunConfig& config, std::ostream& out,
                         std::ostream& err) {
  snapshot_config(config);
  try {
    const LoadedSplit train = load_split(config, "train", true);
    const CalibrationGrid grid = config.calibration_grid
                                     ? *config.calibration_grid
                                     : CalibrationGrid::default_grid();
    const CalibrationResult result =
        calibrate_thresholds(train.instances, config.calibration_targets, grid);
    write_json_file(fs::path(config.out_dir) / "thresholds.json",
                    thresholds_document(result, train.dataset_hash, grid));
    out << "calibrated on " << train.instances.size()
        << " labeled instances\n";
    out << "counts (ambiguous, high, low): " << result.counts[0] << ", "
        << result.counts[1] << ", " << result.counts[2] << " vs targets "
        << result.targets[0] << ", " << result.targets[1] << ", "
        << result.targets[2] << "\n";
    out << "l1_gap: " << result.l1_gap << " (residual count distance after "
        << "calibration)\n";
    out << "thresholds: std<=" << result.thresholds.agreement_std_max
        << " (" << std_convention_name(result.thresholds.std_convention)
        << "), high>=" << result.thresholds.high_mean_min
        << ", low<=" << result.thresholds.low_mean_max << "\n";
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

inline int cmd_index(const RunConfig& config, std::ostream& out,
                     std::ostream& err) {
  snapshot_config(config);
  try {
    const LoadedSplit train = load_split(config, "train", true);
    const CategoryThresholds thresholds = load_thresholds(config);
    const auto categories = categorize_all(train.instances, thresholds);
    Gateway gateway(config.gateway);
    const auto indexes = build_indexes(train.instances, categories, gateway,
                                       train.dataset_hash, config.embed);
    json counts = json::object();
    for (const auto& index : indexes) {
      const fs::path path =
          fs::path(config.out_dir) / index_filename(index.category);
      write_text_file(path, serialize_index(index));
      counts[category_name(index.category)] = index.entries.size();
      out << path.string() << ": " << index.entries.size() << " entries\n";
    }
    write_json_file(
        fs::path(config.out_dir) / "index_report.json",
        json{{"dataset_hash", train.dataset_hash},
             {"embedding_model_id", config.gateway.embedding_model_id},
             {"dimension", indexes[0].dimension},
             {"counts", counts},
             {"embed",
              {{"include_ending", config.embed.include_ending},
               {"include_meaning", config.embed.include_meaning}}}});
    write_gateway_stats(config, gateway);
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

inline std::array<CategoryIndex, 3> load_indexes(const RunConfig& config) {
  const fs::path dir =
      config.index_dir.empty() ? fs::path(config.out_dir)
                               : fs::path(config.index_dir);
  std::array<CategoryIndex, 3> indexes;
  std::size_t at = 0;
  for (const DifficultyCategory category :
       {DifficultyCategory::kHumanEasyHigh,
        DifficultyCategory::kAmbiguousContext,
        DifficultyCategory::kHumanEasyLow}) {
    const fs::path path = dir / index_filename(category);
    if (!fs::exists(path))
      throw ConfigError("index file " + path.string() +
                        " not found (run index first or set index_dir)");
    indexes[at++] =
        load_index(path, config.gateway.embedding_model_id);
  }
  return indexes;
}

inline int cmd_infer(const RunConfig& config, std::ostream& out,
                     std::ostream& err) {
  snapshot_config(config);
  try {
    LoadedSplit loaded = load_split(config, config.split, false);
    if (config.limit > 0 && loaded.instances.size() > config.limit)
      loaded.instances.resize(config.limit);

    ScoreOptions opts;
    opts.mode = prompt_mode_from_name(config.mode);
    opts.k = config.k;
    opts.prompt = config.prompt;

    std::optional<std::array<CategoryIndex, 3>> indexes;
    if (opts.mode == PromptMode::kFewShot) indexes = load_indexes(config);

    Gateway gateway(config.gateway);
    const std::vector<RunRecord> records =
        run_batch(gateway, loaded.instances,
                  indexes ? &*indexes : nullptr, opts);

    std::size_t ok = 0, failed = 0, retried = 0;
    for (const auto& rec : records) {
      rec.ok() ? ++ok : ++failed;
      if (rec.retried) ++retried;
    }

    write_text_file(fs::path(config.out_dir) / "run_records.jsonl",
                    serialize_run_records(records));
    write_json_file(fs::path(config.out_dir) / "infer_summary.json",
                    json{{"split", config.split},
                         {"mode", config.mode},
                         {"k", opts.mode == PromptMode::kFewShot ? config.k : 0},
                         {"model_id", config.gateway.chat_model_id},
                         {"dataset_hash", loaded.dataset_hash},
                         {"limit", config.limit},
                         {"n", records.size()},
                         {"ok", ok},
                         {"failed", failed},
                         {"retried", retried}});
    write_gateway_stats(config, gateway);

    out << "scored " << records.size() << " instances (" << ok << " ok, "
        << failed << " failed, " << retried << " retried)\n";
    if (!records.empty() && ok == 0) {
      err << "error: every instance failed\n";
      return 2;
    }
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

inline fs::path records_file(const RunConfig& config) {
  if (!config.records_path.empty()) return config.records_path;
  return fs::path(config.out_dir) / "run_records.jsonl";
}

inline int cmd_eval(const RunConfig& config, std::ostream& out,
                    std::ostream& err) {
  snapshot_config(config);
  try {
    const fs::path rec_path = records_file(config);
    const std::vector<RunRecord> records =
        parse_run_records(read_file(rec_path));
    const LoadedSplit loaded = load_split(config, config.split, true);
    const auto stats = stats_of(loaded.instances);

    // Per-category breakdown when calibrated thresholds are available.
    std::optional<std::map<std::string, DifficultyCategory>> categories;
    if (fs::exists(thresholds_file(config)))
      categories =
          categorize_all(loaded.instances, load_thresholds(config));

    const EvalReport report =
        evaluate_run(records, stats, convention_of(config),
                     categories ? &*categories : nullptr);

    json report_json = report.to_json();
    report_json["split"] = config.split;
    report_json["dataset_hash"] = loaded.dataset_hash;
    report_json["records_path"] = rec_path.string();
    write_json_file(fs::path(config.out_dir) / "eval_report.json",
                    report_json);
    const std::string table = eval_report_table(report);
    write_text_file(fs::path(config.out_dir) / "eval_report.txt", table);
    write_text_file(fs::path(config.out_dir) / "residuals.csv",
                    residuals_csv(records, stats, convention_of(config)));
    out << table;
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

// ---------------------------------------------------------------------------
// Ensemble commands

inline std::vector<std::pair<std::string, std::vector<RunRecord>>> load_runs(
    const EnsembleConfig& config) {
  if (config.run_files.size() < 2)
    throw ConfigError("ensemble needs >= 2 run_files, got " +
                      std::to_string(config.run_files.size()));
  if (!config.run_names.empty() &&
      config.run_names.size() != config.run_files.size())
    throw ConfigError("run_names must match run_files in length");
  std::vector<std::pair<std::string, std::vector<RunRecord>>> runs;
  for (std::size_t i = 0; i < config.run_files.size(); ++i) {
    const std::string name = config.run_names.empty()
                                 ? fs::path(config.run_files[i]).stem().string()
                                 : config.run_names[i];
    runs.push_back({name, parse_run_records(read_file(config.run_files[i]))});
  }
  return runs;
}

// Aligned gold means and stds for the matrix rows.
inline void gold_targets(const FeatureMatrix& matrix,
                         const std::map<std::string, AnnotationStats>& stats,
                         StdConvention convention, std::vector<double>& y,
                         std::vector<double>& stds) {
  y.clear();
  stds.clear();
  for (const auto& id : matrix.row_ids) {
    const auto it = stats.find(id);
    if (it == stats.end())
      throw ValidationError("ensemble: no gold stats for instance " + id);
    y.push_back(it->second.mean);
    stds.push_back(std_by(it->second, convention));
  }
}

// Refits the model kind at fixed (already selected) hyperparameters; used
// for the CV report and criterion-style comparisons.
inline CvLearner learner_for(const EnsembleModel& model) {
  const EnsembleKind kind = model.kind;
  switch (kind) {
    case EnsembleKind::kMajorityVote:
      return [](const FeatureMatrix&, const std::vector<double>&,
                const FeatureMatrix& test) {
        EnsembleModel m;
        m.kind = EnsembleKind::kMajorityVote;
        return predict_real(m, test);
      };
    case EnsembleKind::kEqualWeight:
      return [](const FeatureMatrix& train, const std::vector<double>&,
                const FeatureMatrix& test) {
        EnsembleModel m;
        m.kind = EnsembleKind::kEqualWeight;
        m.weights = equal_weights(train.n_cols());
        return predict_real(m, test);
      };
    case EnsembleKind::kPerfWeight:
      return [](const FeatureMatrix& train, const std::vector<double>& y,
                const FeatureMatrix& test) {
        std::vector<double> metrics;
        for (std::size_t c = 0; c < train.n_cols(); ++c)
          metrics.push_back(
              std::max(0.0, spearman_full(train.column(c), y).rho));
        EnsembleModel m;
        m.kind = EnsembleKind::kPerfWeight;
        m.weights = perf_weights(metrics);
        return predict_real(m, test);
      };
    case EnsembleKind::kLinear:
      return [](const FeatureMatrix& train, const std::vector<double>& y,
                const FeatureMatrix& test) {
        return predict_real(fit_linear(train, y), test);
      };
    case EnsembleKind::kSvr: {
      const SvrParams params = model.svr.params;
      return [params](const FeatureMatrix& train, const std::vector<double>& y,
                      const FeatureMatrix& test) {
        return predict_real(fit_svr(train, y, params), test);
      };
    }
    case EnsembleKind::kGbt: {
      const GbtParams params = model.gbt.params;
      return [params](const FeatureMatrix& train, const std::vector<double>& y,
                      const FeatureMatrix& test) {
        return predict_real(fit_gbt_point(train, y, params), test);
      };
    }
  }
  throw ValidationError("learner_for: bad kind");
}

inline int cmd_ensemble_fit(const RunConfig& config, std::ostream& out,
                            std::ostream& err) {
  snapshot_config(config);
  try {
    const auto runs = load_runs(config.ensemble);
    const FeatureBuild build = build_feature_matrix(runs);
    const FeatureMatrix& matrix = build.matrix;
    if (matrix.n_rows() == 0)
      throw ValidationError("ensemble-fit: no instances shared by all runs");

    const LoadedSplit loaded = load_split(config, config.split, true);
    const auto stats = stats_of(loaded.instances);
    std::vector<double> y, stds;
    gold_targets(matrix, stats, convention_of(config), y, stds);

    const EnsembleKind kind = ensemble_kind_from_name(config.ensemble.kind);
    EnsembleModel model;
    switch (kind) {
      case EnsembleKind::kMajorityVote:
        model.kind = kind;
        model.column_ids = matrix.column_ids;
        break;
      case EnsembleKind::kEqualWeight:
        model.kind = kind;
        model.column_ids = matrix.column_ids;
        model.weights = equal_weights(matrix.n_cols());
        break;
      case EnsembleKind::kPerfWeight: {
        std::vector<double> metrics;
        for (std::size_t c = 0; c < matrix.n_cols(); ++c)
          metrics.push_back(
              std::max(0.0, spearman_full(matrix.column(c), y).rho));
        model.kind = kind;
        model.column_ids = matrix.column_ids;
        model.weights = perf_weights(metrics);
        model.weight_metric = "dev_spearman_floored_at_zero";
        break;
      }
      case EnsembleKind::kLinear:
        model = fit_linear(matrix, y);
        break;
      case EnsembleKind::kSvr:
        model = config.ensemble.svr_params
                    ? fit_svr(matrix, y, *config.ensemble.svr_params)
                    : fit_svr_grid(matrix, y, SvrGrid{}, 5, config.seed);
        break;
      case EnsembleKind::kGbt:
        model = fit_gbt(matrix, y, GbtGrid{}, 5, config.seed);
        break;
    }

    json fit_report{{"kind", config.ensemble.kind},
                    {"split", config.split},
                    {"dataset_hash", loaded.dataset_hash},
                    {"rows", matrix.n_rows()},
                    {"columns", matrix.column_ids},
                    {"dropped", json::object()}};
    for (const auto& [id, cols] : build.dropped)
      fit_report["dropped"][id] = cols;

    if (config.ensemble.cv && matrix.n_rows() >= 5) {
      const CvResult cv =
          kfold_cv(learner_for(model), matrix, y, stds, 5, config.seed);
      json folds = json::array();
      for (const auto& fold : cv.folds)
        folds.push_back({{"spearman", fold.spearman},
                         {"degenerate", fold.degenerate},
                         {"acc_within_sd", fold.acc_within_sd},
                         {"n", fold.size}});
      fit_report["cv"] = {{"k", 5},
                          {"seed", config.seed},
                          {"mean_spearman", cv.mean_spearman},
                          {"mean_acc_within_sd", cv.mean_acc_within_sd},
                          {"folds", std::move(folds)}};
      out << "5-fold CV: spearman " << cv.mean_spearman << ", acc_within_sd "
          << cv.mean_acc_within_sd << "\n";
    }

    write_json_file(fs::path(config.out_dir) / "ensemble_model.json",
                    ensemble_model_to_json(model));
    write_json_file(fs::path(config.out_dir) / "ensemble_fit_report.json",
                    fit_report);
    out << "fitted " << config.ensemble.kind << " on " << matrix.n_rows()
        << " rows x " << matrix.n_cols() << " columns ("
        << build.dropped.size() << " dropped)\n";
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

inline int cmd_ensemble_predict(const RunConfig& config, std::ostream& out,
                                std::ostream& err) {
  snapshot_config(config);
  try {
    fs::path model_path = config.ensemble.model_path.empty()
                              ? fs::path(config.out_dir) / "ensemble_model.json"
                              : fs::path(config.ensemble.model_path);
    const json model_json = json::parse(read_file(model_path));
    const EnsembleModel model = ensemble_model_from_json(model_json);

    const auto runs = load_runs(config.ensemble);
    const FeatureBuild build = build_feature_matrix(runs);
    if (build.matrix.n_rows() == 0)
      throw ValidationError(
          "ensemble-predict: no instances shared by all runs");
    const std::vector<double> preds = predict_real(model, build.matrix);

    // Predictions reuse the run-record shape so eval consumes them as-is.
    std::vector<RunRecord> records;
    const std::string digest = sha256_hex(canonical_dump(model_json));
    for (std::size_t i = 0; i < preds.size(); ++i) {
      RunRecord rec;
      rec.instance_id = build.matrix.row_ids[i];
      rec.mode = "ensemble";
      rec.k = 0;
      rec.model_id = std::string("ensemble:") + ensemble_kind_name(model.kind);
      rec.score = preds[i];
      rec.status = "ok";
      rec.prompt_digest = digest;
      rec.provenance = "ensemble";
      records.push_back(std::move(rec));
    }
    write_text_file(fs::path(config.out_dir) / "run_records.jsonl",
                    serialize_run_records(records));
    json dropped = json::object();
    for (const auto& [id, cols] : build.dropped) dropped[id] = cols;
    write_json_file(fs::path(config.out_dir) / "ensemble_summary.json",
                    json{{"kind", ensemble_kind_name(model.kind)},
                         {"model_path", model_path.string()},
                         {"n", records.size()},
                         {"columns", build.matrix.column_ids},
                         {"dropped", std::move(dropped)}});
    out << "predicted " << records.size() << " instances with "
        << ensemble_kind_name(model.kind) << " (" << build.dropped.size()
        << " dropped)\n";
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

// ---------------------------------------------------------------------------

inline int cmd_export_sft(const RunConfig& config, std::ostream& out,
                          std::ostream& err) {
  snapshot_config(config);
  try {
    const LoadedSplit loaded = load_split(config, config.sft.split, true);

    std::vector<SftStrategy> strategies;
    if (config.sft.strategies.empty())
      strategies = all_sft_strategies();
    else
      for (const auto& name : config.sft.strategies)
        strategies.push_back(sft_strategy_from_name(name));

    SftAux aux;
    bool used_gateway = false;
    std::optional<Gateway> gateway;
    for (const SftStrategy strategy : strategies) {
      if (strategy == SftStrategy::kSingleWithDifficulty)
        aux.thresholds = load_thresholds(config);
      if (strategy == SftStrategy::kSingleWithThinking &&
          aux.sense_hints.empty()) {
        if (!config.sft.sense_hints_path.empty()) {
          const json j = json::parse(read_file(config.sft.sense_hints_path));
          for (const auto& [id, gloss] : j.items())
            aux.sense_hints[id] = gloss.get<std::string>();
        } else {
          // Generate hints through the gateway (cached like any chat call).
          gateway.emplace(config.gateway);
          used_gateway = true;
          for (const auto& inst : loaded.instances)
            aux.sense_hints[inst.id] = sense_hint(*gateway, inst);
          json hints = json::object();
          for (const auto& [id, gloss] : aux.sense_hints) hints[id] = gloss;
          write_json_file(fs::path(config.out_dir) / "sense_hints.json",
                          hints);
        }
      }
    }

    json counts = json::object();
    for (const SftStrategy strategy : strategies) {
      const auto records = export_strategy(loaded.instances, strategy, aux);
      const std::string name = sft_strategy_name(strategy);
      write_text_file(fs::path(config.out_dir) / ("sft_" + name + ".jsonl"),
                      serialize_sft_records(records));
      counts[name] = records.size();
      out << "sft_" << name << ".jsonl: " << records.size() << " records\n";
    }
    write_json_file(fs::path(config.out_dir) / "sft_report.json",
                    json{{"split", config.sft.split},
                         {"dataset_hash", loaded.dataset_hash},
                         {"counts", std::move(counts)}});
    if (used_gateway) write_gateway_stats(config, *gateway);
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

// ---------------------------------------------------------------------------

inline int cmd_report(const std::vector<std::string>& run_dirs,
                      const std::string& out_dir, std::ostream& out,
                      std::ostream& err) {
  if (run_dirs.empty()) {
    err << "error: report needs at least one run directory\n";
    return 2;
  }
  struct Row {
    std::string run, model, mode, split;
    double spearman = 0, acc = 0;
    std::size_t n = 0, failed = 0;
  };
  std::vector<Row> rows;
  for (const auto& dir : run_dirs) {
    const fs::path report_path = fs::path(dir) / "eval_report.json";
    if (!fs::exists(report_path)) {
      err << "error: " << dir << " has no eval_report.json\n";
      return 2;
    }
    json report;
    try {
      report = json::parse(read_file(report_path));
    } catch (const std::exception& e) {
      err << "error: " << report_path.string() << ": " << e.what() << "\n";
      return 2;
    }
    Row row;
    row.run = fs::path(dir).filename().string();
    if (row.run.empty()) row.run = dir;
    row.split = report.value("split", "-");
    row.spearman = report.value("spearman", 0.0);
    row.acc = report.value("acc_within_sd", 0.0);
    row.n = report.value("n_evaluated", 0);
    row.failed = report.value("n_failed", 0);
    const fs::path summary_path = fs::path(dir) / "infer_summary.json";
    const fs::path ensemble_path = fs::path(dir) / "ensemble_summary.json";
    row.model = "-";
    row.mode = "-";
    if (fs::exists(summary_path)) {
      const json summary = json::parse(read_file(summary_path));
      row.model = summary.value("model_id", "-");
      row.mode = summary.value("mode", "-");
    } else if (fs::exists(ensemble_path)) {
      const json summary = json::parse(read_file(ensemble_path));
      row.model = "ensemble:" + summary.value("kind", "-");
      row.mode = "ensemble";
    }
    rows.push_back(std::move(row));
  }

  std::ostringstream text, csv;
  csv << "run,model,mode,split,spearman,acc_within_sd,n,failed\n";
  text << "run\tmodel\tmode\tsplit\tspearman\tacc_within_sd\tn\tfailed\n";
  for (const auto& row : rows) {
    text << row.run << '\t' << row.model << '\t' << row.mode << '\t'
         << row.split << '\t' << row.spearman << '\t' << row.acc << '\t'
         << row.n << '\t' << row.failed << '\n';
    csv << row.run << ',' << row.model << ',' << row.mode << ',' << row.split
        << ',' << row.spearman << ',' << row.acc << ',' << row.n << ','
        << row.failed << '\n';
  }
  out << text.str();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text_file(fs::path(out_dir) / "report.txt", text.str());
    write_text_file(fs::path(out_dir) / "report.csv", csv.str());
  }
  return 0;
}

inline int cmd_mock_serve(const RunConfig& config, std::ostream& out,
                          std::ostream& err) {
  try {
    MockScript script;
    if (!config.mock_script.empty())
      script = MockScript::from_json(json::parse(read_file(config.mock_script)));
    MockServer server(script);
    server.start(config.port);
    out << "mock server listening on " << server.base_url() << "\n";
    out.flush();
    if (config.serve_seconds > 0) {
      std::this_thread::sleep_for(std::chrono::seconds(config.serve_seconds));
      server.stop();
      out << "mock server stopped after " << config.serve_seconds << "s ("
          << server.chat_calls() << " chat, " << server.embed_calls()
          << " embed calls)\n";
      return 0;
    }
    for (;;) std::this_thread::sleep_for(std::chrono::seconds(1));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace pipeline
}  // namespace ambiscore
