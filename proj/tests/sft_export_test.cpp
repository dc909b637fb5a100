#include "ambiscore/sft_export.hpp"

#include <gtest/gtest.h>

#include "ambiscore/prompting.hpp"
#include "test_support.hpp"

using namespace ambiscore;
namespace ts = testsupport;

namespace {

std::vector<StoryInstance> two_instances() {
  return {ts::golden_query(), ts::golden_high()[0]};
}

SftAux aux_with_hints(const std::vector<StoryInstance>& instances) {
  SftAux aux;
  for (const auto& inst : instances)
    aux.sense_hints[inst.id] = "a gloss for " + inst.homonym;
  return aux;
}

TEST(SingleAnnotator, ExpandsEveryJudgmentInOrder) {
  const auto records =
      export_strategy(two_instances(), SftStrategy::kSingleAnnotator);
  ASSERT_EQ(records.size(), 10u);  // 2 instances x 5 annotators
  // Sorted by instance id: dev-0001 before train-h1.
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(records[i].instance_id, "dev-0001");
    EXPECT_EQ(records[i].annotator_index, i);
  }
  for (int i = 5; i < 10; ++i) EXPECT_EQ(records[i].instance_id, "train-h1");
  // dev-0001 annotations are [5,5,4,5,5]; targets follow annotator order.
  EXPECT_EQ(records[0].target, "5");
  EXPECT_EQ(records[2].target, "4");
  ASSERT_EQ(records[0].messages.size(), 1u);
  EXPECT_EQ(records[0].messages[0].role, "user");
  EXPECT_EQ(records[0].messages[0].text.rfind("Rate how plausible", 0), 0u);
  EXPECT_NE(records[0].messages[0].text.find("Proposed Meaning: "),
            std::string::npos);
}

TEST(FiveAnnotator, TargetListsScoresThenMean) {
  const auto records =
      export_strategy({ts::golden_query()}, SftStrategy::kFiveAnnotator);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].target, "[5, 5, 4, 5, 5], mean: 4.8");
  ASSERT_TRUE(records[0].mean.has_value());
  EXPECT_DOUBLE_EQ(*records[0].mean, 4.8);
  EXPECT_NE(records[0].messages[0].text.find("five different annotators"),
            std::string::npos);
}

TEST(SingleWithThinking, EmbedsSenseGlossAndBandRationale) {
  const auto instances = two_instances();
  const auto records = export_strategy(
      instances, SftStrategy::kSingleWithThinking, aux_with_hints(instances));
  ASSERT_EQ(records.size(), 2u);
  const auto& text = records[0].messages[0].text;  // dev-0001, mean 4.8
  EXPECT_NE(text.find("Sense gloss: a gloss for bark"), std::string::npos);
  EXPECT_NE(text.find("Assessment: Meaning strongly fits"), std::string::npos);
  EXPECT_EQ(records[0].target, "5");  // round(4.8)
}

TEST(SingleWithThinking, MissingHintNamesTheInstance) {
  try {
    export_strategy({ts::golden_query()}, SftStrategy::kSingleWithThinking);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("dev-0001"), std::string::npos);
  }
}

TEST(SingleWithDifficulty, PrefixesTheHumanReadableTag) {
  SftAux aux;
  aux.thresholds = CategoryThresholds{};  // defaults: std<=0.9, >=4, <=2
  const auto records = export_strategy(two_instances(),
                                       SftStrategy::kSingleWithDifficulty, aux);
  ASSERT_EQ(records.size(), 2u);
  // dev-0001: mean 4.8, sample std ~0.447 -> agreed high.
  EXPECT_EQ(records[0].difficulty, "Human Easy - High Score");
  EXPECT_EQ(records[0].messages[0].text.rfind(
                "Difficulty: Human Easy - High Score\n\n", 0),
            0u);
  EXPECT_EQ(records[0].target, "5");
}

TEST(SingleWithDifficulty, RequiresThresholds) {
  EXPECT_THROW(
      export_strategy(two_instances(), SftStrategy::kSingleWithDifficulty),
      ValidationError);
}

TEST(ExportStrategy, RejectsUnlabeledInstancesByName) {
  auto inst = ts::golden_query();
  inst.annotations.clear();
  try {
    export_strategy({inst}, SftStrategy::kSingleAnnotator);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("dev-0001"), std::string::npos);
  }
}

TEST(Serialize, LinesAreStableSchemaValidJson) {
  const auto instances = two_instances();
  const auto records =
      export_strategy(instances, SftStrategy::kSingleAnnotator);
  const std::string first = serialize_sft_records(records);
  EXPECT_EQ(first, serialize_sft_records(records));  // byte-stable

  std::istringstream stream(first);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(stream, line)) {
    ++lines;
    const json j = json::parse(line);
    for (const char* key : {"strategy", "instance_id", "messages", "target"})
      ASSERT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["strategy"], "single_annotator");
    ASSERT_EQ(j["messages"].size(), 1u);
    EXPECT_EQ(j["messages"][0]["role"], "user");
  }
  EXPECT_EQ(lines, records.size());
}

TEST(Serialize, TargetsRoundTripThroughScoreParser) {
  const auto instances = ts::calibration_corpus();
  SftAux aux = aux_with_hints(instances);
  aux.thresholds = CategoryThresholds{0.5, 3.5, 1.5, StdConvention::kSample};
  for (const SftStrategy strategy : all_sft_strategies()) {
    const auto records = export_strategy(instances, strategy, aux);
    EXPECT_EQ(records.size(), strategy == SftStrategy::kSingleAnnotator
                                  ? instances.size() * 5
                                  : instances.size());
    for (const auto& rec : records) {
      const int parsed = parse_score(rec.target).score;
      EXPECT_GE(parsed, 1) << rec.target;
      EXPECT_LE(parsed, 5) << rec.target;
    }
  }
}

TEST(StrategyNames, RoundTripAndRejectUnknown) {
  for (const SftStrategy s : all_sft_strategies())
    EXPECT_EQ(sft_strategy_from_name(sft_strategy_name(s)), s);
  EXPECT_THROW(sft_strategy_from_name("pairwise_ranker"), ConfigError);
}

}  // namespace
