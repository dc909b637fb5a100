// Release checklist. Every test prints one [PASS]/[FAIL] line so the stdout
// of a run doubles as the checklist; tolerances and timing budgets are pinned
// in the assertions themselves.

#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ambiscore/cli.hpp"
#include "ambiscore/mock_server.hpp"
#include "ambiscore/pipeline.hpp"
#include "test_support.hpp"

using namespace ambiscore;
namespace ts = testsupport;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

class Acceptance : public ::testing::Test {
 protected:
  void TearDown() override {
    std::cout << (HasFailure() ? "[FAIL] " : "[PASS] ") << label_ << std::endl;
  }
  std::string label_;
};

std::vector<RetrievedExample> examples_from(
    const std::vector<StoryInstance>& instances) {
  std::vector<RetrievedExample> out;
  for (const auto& inst : instances) {
    const auto stats = annotation_stats(inst.annotations);
    RetrievedExample e;
    e.id = inst.id;
    e.similarity = 1.0;
    e.story_text = render_story_text(inst, true);
    e.gold_score = round_score(stats.mean);
    e.gold_mean = stats.mean;
    out.push_back(std::move(e));
  }
  return out;
}

std::size_t common_prefix(const std::string& a, const std::string& b) {
  std::size_t i = 0;
  while (i < a.size() && i < b.size() && a[i] == b[i]) ++i;
  return i;
}

std::size_t common_suffix(const std::string& a, const std::string& b) {
  std::size_t i = 0;
  while (i < a.size() && i < b.size() &&
         a[a.size() - 1 - i] == b[b.size() - 1 - i])
    ++i;
  return i;
}

FeatureMatrix random_matrix(std::size_t n, const std::vector<std::string>& cols,
                            std::mt19937_64& rng) {
  FeatureMatrix x;
  x.column_ids = cols;
  for (std::size_t i = 0; i < n; ++i) {
    x.row_ids.push_back("r-" + std::to_string(i));
    std::vector<double> row;
    for (std::size_t c = 0; c < cols.size(); ++c)
      row.push_back(ts::uniform(rng, 1.0, 5.0));
    x.rows.push_back(std::move(row));
  }
  return x;
}

TEST_F(Acceptance, Criterion01SpearmanOracle) {
  label_ =
      "criterion 1: spearman matches a counting-rank oracle to 1e-9 on 1000 "
      "tied pairs and the worked tie case gives 0.8660";
  const auto t0 = Clock::now();

  const auto tie = spearman_full({3, 3, 5}, {2, 4, 5});
  EXPECT_FALSE(tie.degenerate);
  EXPECT_NEAR(tie.rho, 0.8660, 1e-4);

  std::mt19937_64 rng(11);
  int checked = 0;
  for (int pair = 0; pair < 1000; ++pair) {
    std::vector<double> a(50), b(50);
    for (int i = 0; i < 50; ++i) {
      a[i] = 1.0 + static_cast<double>(rng() % 5);  // ties guaranteed
      b[i] = 1.0 + static_cast<double>(rng() % 5);
    }
    const auto got = spearman_full(a, b);
    if (got.degenerate) continue;
    ASSERT_NEAR(got.rho, ts::oracle_spearman(a, b), 1e-9) << "pair " << pair;
    ++checked;
  }
  EXPECT_GE(checked, 990);
  EXPECT_LT(seconds_since(t0), 5.0);
}

TEST_F(Acceptance, Criterion02AccWithinSdHandCases) {
  label_ =
      "criterion 2: acc_within_sd reproduces the hand-checked zero-std and "
      "std-convention cases exactly";

  const AnnotationStats flat = annotation_stats({4, 4, 4, 4, 4});
  EXPECT_EQ(flat.std_sample, 0.0);
  EXPECT_EQ(flat.std_population, 0.0);
  std::map<std::string, AnnotationStats> stats{{"i", flat}};
  std::map<std::string, double> pred{{"i", 4.0}};
  EXPECT_EQ(acc_within_sd(pred, stats, StdConvention::kSample), 1.0);
  EXPECT_EQ(acc_within_sd(pred, stats, StdConvention::kPopulation), 1.0);
  pred["i"] = 4.05;  // zero-std instances require an exact hit
  EXPECT_EQ(acc_within_sd(pred, stats, StdConvention::kSample), 0.0);

  const AnnotationStats mixed = annotation_stats({5, 5, 4, 4, 4});
  EXPECT_NEAR(mixed.mean, 4.4, 1e-12);
  EXPECT_NEAR(mixed.std_population, 0.48989794855663565, 1e-12);
  EXPECT_NEAR(mixed.std_sample, 0.5477225575051661, 1e-12);
  stats = {{"i", mixed}};
  pred["i"] = 4.9;  // inside the sample band, outside the population band
  EXPECT_EQ(acc_within_sd(pred, stats, StdConvention::kSample), 1.0);
  EXPECT_EQ(acc_within_sd(pred, stats, StdConvention::kPopulation), 0.0);
  pred["i"] = 4.88;
  EXPECT_EQ(acc_within_sd(pred, stats, StdConvention::kPopulation), 1.0);
}

TEST_F(Acceptance, Criterion03BandBoundaries) {
  label_ =
      "criterion 3: plausibility bands over a [1,5] sweep in 0.01 steps "
      "transition exactly at 2.0, 3.0, 4.0";
  for (int i = 100; i <= 500; ++i) {
    const double mean = i / 100.0;  // exact boundary doubles at 200/300/400
    const PlausibilityBand expected =
        i >= 400   ? PlausibilityBand::kHigh
        : i >= 300 ? PlausibilityBand::kModerate
        : i >= 200 ? PlausibilityBand::kSlight
                   : PlausibilityBand::kNotPlausible;
    ASSERT_EQ(plausibility_band(mean), expected) << "mean " << mean;
  }
  EXPECT_THROW(plausibility_band(0.99), ValidationError);
  EXPECT_THROW(plausibility_band(5.01), ValidationError);
}

TEST_F(Acceptance, Criterion04CalibrationTargets) {
  label_ =
      "criterion 4: calibration reaches l1_gap 0 on the planted corpus "
      "(and ±2% per category on the real train split when "
      "AMBISTORY_TRAIN is set)";
  const auto t0 = Clock::now();

  const CalibrationResult synthetic =
      calibrate_thresholds(ts::calibration_corpus(), {10, 10, 10});
  EXPECT_EQ(synthetic.l1_gap, 0u);
  EXPECT_EQ(synthetic.counts[0], 10u);
  EXPECT_EQ(synthetic.counts[1], 10u);
  EXPECT_EQ(synthetic.counts[2], 10u);

  if (const char* path = std::getenv("AMBISTORY_TRAIN");
      path != nullptr && fs::exists(path)) {
    const ParseResult parsed = parse_dataset(read_file(path), Split::kTrain);
    std::vector<StoryInstance> labeled;
    for (const auto& inst : parsed.instances)
      if (inst.labeled()) labeled.push_back(inst);
    const CategoryCounts targets{1088, 631, 561};
    const CalibrationResult real = calibrate_thresholds(labeled, targets);
    for (int c = 0; c < 3; ++c) {
      const double gap = std::abs(static_cast<double>(real.counts[c]) -
                                  static_cast<double>(targets[c]));
      EXPECT_LE(gap, 0.02 * static_cast<double>(targets[c]))
          << "category " << c << " count " << real.counts[c];
    }
  }
  EXPECT_LT(seconds_since(t0), 60.0);
}

TEST_F(Acceptance, Criterion05RetrievalExhaustiveEquivalence) {
  label_ =
      "criterion 5: index search equals exhaustive cosine ranking on 100 "
      "random queries and self-queries score 1.0";
  const auto t0 = Clock::now();

  CategoryIndex index;
  index.category = DifficultyCategory::kAmbiguousContext;
  index.embedding_model_id = "m";
  index.dimension = 24;
  for (int i = 0; i < 150; ++i) {
    IndexEntry e;
    e.id = "e-" + std::to_string(1000 + i);
    e.vector = mock_embedding("acceptance entry " + std::to_string(i), 24);
    e.story_text = "story " + std::to_string(i);
    e.gold_score = i % 5 + 1;
    e.gold_mean = e.gold_score;
    index.entries.push_back(std::move(e));
  }
  ASSERT_LE(index.entries.size(), 200u);

  for (int q = 0; q < 100; ++q) {
    auto query = mock_embedding("acceptance query " + std::to_string(q), 24);
    normalize_unit(query);
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& e : index.entries) {
      long double dot = 0;
      for (std::size_t i = 0; i < query.size(); ++i)
        dot += static_cast<long double>(query[i]) * e.vector[i];
      scored.push_back({static_cast<double>(dot), e.id});
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    const auto got = search(index, query, index.entries.size());
    ASSERT_EQ(got.size(), scored.size());
    for (std::size_t i = 0; i < got.size(); ++i)
      ASSERT_EQ(got[i].id, scored[i].second) << "query " << q << " rank " << i;
  }

  for (const int i : {0, 42, 149}) {
    const auto got = search(index, index.entries[i].vector, 1);
    ASSERT_EQ(got.size(), 1u);
    EXPECT_EQ(got[0].id, index.entries[i].id);
    EXPECT_NEAR(got[0].similarity, 1.0, 1e-6);
  }
  EXPECT_LT(seconds_since(t0), 10.0);
}

TEST_F(Acceptance, Criterion06PromptFidelity) {
  label_ =
      "criterion 6: prompts match the golden fixtures byte for byte; few-shot "
      "differs from zero-shot only in the examples block";

  const auto zero = build_prompt(ts::golden_query(), {});
  const auto k1 = build_prompt(
      ts::golden_query(),
      examples_from({ts::golden_high()[0], ts::golden_ambiguous()[0],
                     ts::golden_low()[0]}));
  auto all = ts::golden_high();
  for (const auto& i : ts::golden_ambiguous()) all.push_back(i);
  for (const auto& i : ts::golden_low()) all.push_back(i);
  const auto k3 = build_prompt(ts::golden_query(), examples_from(all));

  EXPECT_EQ(zero.text,
            read_file(ts::fixture_path("prompt_zero_shot.golden.txt")));
  EXPECT_EQ(k1.text,
            read_file(ts::fixture_path("prompt_few_shot_k1.golden.txt")));
  EXPECT_EQ(k3.text,
            read_file(ts::fixture_path("prompt_few_shot_k3.golden.txt")));

  for (const std::string& few : {k1.text, k3.text}) {
    // A single contiguous insertion means the shared prefix and suffix
    // together cover all of the zero-shot text.
    const std::size_t p = common_prefix(zero.text, few);
    const std::size_t s = common_suffix(zero.text, few);
    EXPECT_GE(p + s, zero.text.size());
    EXPECT_NE(few.find("Example 1:"), std::string::npos);
    EXPECT_EQ(zero.text.find("Example 1:"), std::string::npos);
  }
}

TEST_F(Acceptance, Criterion07EnsembleWorkedCases) {
  label_ =
      "criterion 7: voting and averaging worked examples, planted linear "
      "recovery, SVR KKT optimality, GBT monotone training loss";

  EXPECT_EQ(majority_vote(std::vector<int>{3, 3, 3, 5, 1}), 3);
  EXPECT_EQ(majority_vote(std::vector<int>{4, 4, 2, 2, 5}), 3);
  EXPECT_EQ(majority_vote(std::vector<int>{1, 2, 3, 4, 5}), 3);

  const auto w5 = equal_weights(5);
  EXPECT_EQ(weighted_average(std::vector<double>{5, 4, 4, 3, 4}, w5), 4);
  EXPECT_EQ(weighted_average(std::vector<double>{5, 5, 5, 2, 2}, w5), 4);
  EXPECT_EQ(weighted_average(std::vector<double>{1, 1, 2, 2, 2}, w5), 2);

  std::mt19937_64 rng(21);
  FeatureMatrix lin_x = random_matrix(60, {"m1", "m2"}, rng);
  std::vector<double> lin_y;
  for (const auto& row : lin_x.rows)
    lin_y.push_back(0.5 * row[0] + 0.5 * row[1]);
  const EnsembleModel lin = fit_linear(lin_x, lin_y);
  EXPECT_NEAR(lin.linear.intercept, 0.0, 1e-6);
  ASSERT_EQ(lin.linear.coefficients.size(), 2u);
  EXPECT_NEAR(lin.linear.coefficients[0], 0.5, 1e-6);
  EXPECT_NEAR(lin.linear.coefficients[1], 0.5, 1e-6);

  FeatureMatrix svr_x = random_matrix(24, {"m1", "m2"}, rng);
  std::vector<double> svr_y;
  for (const auto& row : svr_x.rows)
    svr_y.push_back(0.7 * row[0] + 0.3 * row[1]);
  const SvrParams params{100.0, 0.1, 0.5};
  const EnsembleModel svr = fit_svr(svr_x, svr_y, params, 1e-4);
  const auto svr_pred = predict_real(svr, svr_x);
  for (std::size_t i = 0; i < svr_y.size(); ++i)
    EXPECT_LE(std::abs(svr_pred[i] - svr_y[i]), params.epsilon + 1e-3)
        << "row " << i;
  EXPECT_LE(ts::oracle_svr_kkt(svr_x, svr_y, svr), 1e-3);

  FeatureMatrix gbt_x = random_matrix(40, {"m1", "m2"}, rng);
  std::vector<double> gbt_y;
  for (const auto& row : gbt_x.rows)
    gbt_y.push_back(row[0] > 3.0 ? 4.5 : 1.5);
  const EnsembleModel gbt =
      fit_gbt_point(gbt_x, gbt_y, GbtParams{40, 2, 0.3, 2});
  ASSERT_EQ(gbt.gbt.trees.size(), 40u);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t <= 40; ++t) {
    GbtModel head = gbt.gbt;
    head.trees.resize(t);
    double mse = 0;
    for (std::size_t i = 0; i < gbt_y.size(); ++i) {
      const double diff = gbt_predict_one(head, gbt_x.rows[i]) - gbt_y[i];
      mse += diff * diff;
    }
    mse /= static_cast<double>(gbt_y.size());
    EXPECT_LE(mse, prev + 1e-12) << "after " << t << " trees";
    prev = mse;
  }
}

TEST_F(Acceptance, Criterion08StackingBeatsBestSingleModel) {
  label_ =
      "criterion 8: every stacked meta-learner's 5-fold CV spearman strictly "
      "beats the best single input column";
  const auto t0 = Clock::now();

  std::mt19937_64 rng(31);
  FeatureMatrix x = random_matrix(600, {"m1", "m2", "n1", "n2", "n3"}, rng);
  std::vector<double> y, stds;
  for (const auto& row : x.rows) {
    y.push_back(0.3 * row[0] + 0.7 * row[1] + ts::gaussian(rng, 0.0, 0.2));
    stds.push_back(0.5);
  }

  double best_single = -2.0;
  for (std::size_t c = 0; c < x.n_cols(); ++c) {
    const CvLearner pick = [c](const FeatureMatrix&,
                               const std::vector<double>&,
                               const FeatureMatrix& test) {
      return test.column(c);
    };
    best_single = std::max(
        best_single, kfold_cv(pick, x, y, stds, 5, 17).mean_spearman);
  }
  EXPECT_GT(best_single, 0.5);  // the informative columns really do rank

  EnsembleModel linear_model;
  linear_model.kind = EnsembleKind::kLinear;
  EnsembleModel svr_model;
  svr_model.kind = EnsembleKind::kSvr;
  svr_model.svr.params = SvrParams{1.0, 0.2, 0.2};
  EnsembleModel gbt_model;
  gbt_model.kind = EnsembleKind::kGbt;
  gbt_model.gbt.params = GbtParams{200, 3, 0.1, 5};

  for (const auto& [name, model] :
       {std::pair<std::string, EnsembleModel>{"linear", linear_model},
        {"svr", svr_model},
        {"gbt", gbt_model}}) {
    const CvResult cv =
        kfold_cv(pipeline::learner_for(model), x, y, stds, 5, 17);
    EXPECT_GT(cv.mean_spearman, best_single) << name;
  }
  EXPECT_LT(seconds_since(t0), 60.0);
}

TEST_F(Acceptance, Criterion09DeterministicReruns) {
  label_ =
      "criterion 9: rerunning infer and eval against a warm cache is "
      "byte-identical and makes zero network calls";

  const fs::path dir = ts::fresh_dir("acceptance_c9");
  const auto train = ts::calibration_corpus();
  const auto dev = ts::spread_dev();
  ts::write_dataset(dir, "train.json", train);
  ts::write_dataset(dir, "dev.json", dev);
  std::vector<StoryInstance> all = train;
  all.insert(all.end(), dev.begin(), dev.end());
  MockServer server(oracle_mock_script(all));
  server.start();

  RunConfig config;
  config.dataset.train_path = (dir / "train.json").string();
  config.dataset.dev_path = (dir / "dev.json").string();
  config.gateway.base_url = server.base_url();
  config.gateway.cache_dir = (dir / "cache").string();
  config.out_dir = (dir / "out1").string();
  config.calibration_targets = {10, 10, 10};
  config.mode = "few_shot";
  config.k = 1;

  std::ostringstream out, err;
  ASSERT_EQ(pipeline::cmd_calibrate(config, out, err), 0) << err.str();
  ASSERT_EQ(pipeline::cmd_index(config, out, err), 0) << err.str();
  ASSERT_EQ(pipeline::cmd_infer(config, out, err), 0) << err.str();
  ASSERT_EQ(pipeline::cmd_eval(config, out, err), 0) << err.str();

  RunConfig warm = config;
  warm.out_dir = (dir / "out2").string();
  warm.index_dir = config.out_dir;
  warm.thresholds_path =
      (fs::path(config.out_dir) / "thresholds.json").string();
  ASSERT_EQ(pipeline::cmd_infer(warm, out, err), 0) << err.str();
  ASSERT_EQ(pipeline::cmd_eval(warm, out, err), 0) << err.str();
  server.stop();

  auto bytes = [](const fs::path& p) { return read_file(p); };
  EXPECT_EQ(bytes(fs::path(warm.out_dir) / "run_records.jsonl"),
            bytes(fs::path(config.out_dir) / "run_records.jsonl"));
  EXPECT_EQ(bytes(fs::path(warm.out_dir) / "eval_report.txt"),
            bytes(fs::path(config.out_dir) / "eval_report.txt"));
  EXPECT_EQ(bytes(fs::path(warm.out_dir) / "residuals.csv"),
            bytes(fs::path(config.out_dir) / "residuals.csv"));
  json report1 =
      json::parse(bytes(fs::path(config.out_dir) / "eval_report.json"));
  json report2 =
      json::parse(bytes(fs::path(warm.out_dir) / "eval_report.json"));
  report1.erase("records_path");  // the only field allowed to differ
  report2.erase("records_path");
  EXPECT_EQ(report1, report2);

  const json stats =
      json::parse(bytes(fs::path(warm.out_dir) / "gateway_stats.json"));
  EXPECT_EQ(stats["network_calls"], 0);
  EXPECT_GT(stats["cache_hits"].get<int>(), 0);
}

TEST_F(Acceptance, Criterion10OracleMockRecoversGoldRanking) {
  label_ =
      "criterion 10: with a mock that answers the rounded gold mean the "
      "pipeline scores spearman >= 0.95 and acc_within_sd >= 0.95 on dev";

  const fs::path dir = ts::fresh_dir("acceptance_c10");
  const auto dev = ts::spread_dev();
  ts::write_dataset(dir, "dev.json", dev);
  MockServer server(oracle_mock_script(dev));
  server.start();

  RunConfig config;
  config.dataset.dev_path = (dir / "dev.json").string();
  config.gateway.base_url = server.base_url();
  config.gateway.cache_dir = (dir / "cache").string();
  config.out_dir = (dir / "out").string();

  std::ostringstream out, err;
  ASSERT_EQ(pipeline::cmd_infer(config, out, err), 0) << err.str();
  ASSERT_EQ(pipeline::cmd_eval(config, out, err), 0) << err.str();
  server.stop();

  const json report =
      json::parse(read_file(fs::path(config.out_dir) / "eval_report.json"));
  EXPECT_GE(report["spearman"].get<double>(), 0.95);
  EXPECT_GE(report["acc_within_sd"].get<double>(), 0.95);
  EXPECT_EQ(report["n_evaluated"], 10);
}

TEST_F(Acceptance, Criterion11LiveRunCapability) {
  label_ =
      "criterion 11: live templates parse, the API key stays in the "
      "environment, and the documented --limit smoke path works";

  const fs::path repo = fs::path(AMBISCORE_FIXTURE_DIR).parent_path()
                            .parent_path();
  const fs::path configs = repo / "configs";
  for (const char* name : {"mock.json", "live.openai.json", "live.vllm.json"}) {
    ASSERT_TRUE(fs::exists(configs / name)) << name;
    EXPECT_NO_THROW(RunConfig::load((configs / name).string())) << name;
  }
  EXPECT_NO_THROW(MockScript::from_json(
      json::parse(read_file(configs / "mock_script.json"))));

  EXPECT_EQ(GatewayConfig{}.api_key_env, "AMBISCORE_API_KEY");
  const RunConfig live = RunConfig::load((configs / "live.openai.json").string());
  EXPECT_EQ(live.gateway.api_key_env, "OPENAI_API_KEY");  // a name, not a key
  EXPECT_EQ(live.gateway.base_url.rfind("https://", 0), 0u);
  EXPECT_EQ(live.limit, 20u);  // the documented smoke-run size

  // The smoke path itself, exercised through the CLI against a mock.
  const fs::path dir = ts::fresh_dir("acceptance_c11");
  ts::write_dataset(dir, "dev.json", ts::spread_dev());
  MockServer server(oracle_mock_script(ts::spread_dev()));
  server.start();
  json cfg;
  cfg["dataset"] = json{{"dev_path", (dir / "dev.json").string()}};
  cfg["gateway"] = json{{"base_url", server.base_url()},
                        {"cache_dir", (dir / "cache").string()}};
  cfg["out_dir"] = (dir / "out").string();
  const fs::path cfg_path = dir / "run.json";
  atomic_write_file(cfg_path, cfg.dump(2));
  std::ostringstream out, err;
  ASSERT_EQ(run_cli({"infer", "--config", cfg_path.string(), "--limit", "3"},
                    out, err),
            0)
      << err.str();
  server.stop();
  const json summary =
      json::parse(read_file(dir / "out" / "infer_summary.json"));
  EXPECT_EQ(summary["n"], 3);
  EXPECT_EQ(summary["limit"], 3);
}

TEST_F(Acceptance, Criterion12SftExportExpansionAndRoundTrip) {
  label_ =
      "criterion 12: single-annotator export is exactly 5x the corpus and "
      "every strategy's targets re-parse as valid scores";

  const auto corpus = ts::calibration_corpus();
  SftAux aux;
  aux.thresholds = CategoryThresholds{0.5, 3.5, 1.5, StdConvention::kSample};
  for (const auto& inst : corpus)
    aux.sense_hints[inst.id] = "a gloss for " + inst.homonym;

  for (const SftStrategy strategy :
       {SftStrategy::kSingleAnnotator, SftStrategy::kFiveAnnotator,
        SftStrategy::kSingleWithThinking, SftStrategy::kSingleWithDifficulty}) {
    const auto records = export_strategy(corpus, strategy, aux);
    if (strategy == SftStrategy::kSingleAnnotator)
      EXPECT_EQ(records.size(), 5 * corpus.size());
    else
      EXPECT_EQ(records.size(), corpus.size());

    std::istringstream lines(serialize_sft_records(records));
    std::string line;
    std::size_t parsed_lines = 0;
    while (std::getline(lines, line)) {
      const json j = json::parse(line);
      ASSERT_TRUE(j.contains("strategy"));
      ASSERT_TRUE(j.contains("instance_id"));
      ASSERT_TRUE(j.contains("messages"));
      ASSERT_TRUE(j.contains("target"));
      ASSERT_FALSE(j["messages"].empty());
      for (const auto& m : j["messages"]) {
        ASSERT_TRUE(m.contains("role"));
        ASSERT_TRUE(m.contains("text"));
      }
      const ParsedScore score = parse_score(j["target"].get<std::string>());
      EXPECT_GE(score.score, 1.0);
      EXPECT_LE(score.score, 5.0);
      ++parsed_lines;
    }
    EXPECT_EQ(parsed_lines, records.size());
  }
}

}  // namespace
