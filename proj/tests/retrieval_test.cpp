#include "ambiscore/retrieval.hpp"

#include <gtest/gtest.h>

#include "ambiscore/mock_server.hpp"
#include "test_support.hpp"

using namespace ambiscore;
namespace ts = testsupport;

namespace {

// Index over synthetic unit vectors from the deterministic mock embedding;
// no server needed for pure search tests.
CategoryIndex make_index(std::size_t entries, std::size_t dim,
                         DifficultyCategory category =
                             DifficultyCategory::kAmbiguousContext) {
  CategoryIndex index;
  index.category = category;
  index.embedding_model_id = "m";
  index.dimension = dim;
  for (std::size_t i = 0; i < entries; ++i) {
    IndexEntry e;
    e.id = "e-" + std::to_string(1000 + i);  // zero-padded for stable order
    e.vector = mock_embedding("entry " + std::to_string(i), dim);
    e.story_text = "story " + std::to_string(i);
    e.gold_score = static_cast<int>(i % 5) + 1;
    e.gold_mean = e.gold_score;
    index.entries.push_back(std::move(e));
  }
  return index;
}

std::vector<std::string> exhaustive_ranking(const CategoryIndex& index,
                                            std::vector<float> query,
                                            const std::string& exclude) {
  normalize_unit(query);
  std::vector<std::pair<double, std::string>> scored;
  for (const auto& e : index.entries) {
    if (e.id == exclude) continue;
    long double dot = 0;
    for (std::size_t i = 0; i < query.size(); ++i)
      dot += static_cast<long double>(query[i]) * e.vector[i];
    scored.push_back({static_cast<double>(dot), e.id});
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> ids;
  for (const auto& [sim, id] : scored) ids.push_back(id);
  return ids;
}

TEST(Search, MatchesExhaustiveRankingOnRandomQueries) {
  const auto index = make_index(150, 24);
  for (int q = 0; q < 40; ++q) {
    const auto query = mock_embedding("query " + std::to_string(q), 24);
    const auto expected = exhaustive_ranking(index, query, "");
    const auto got = search(index, query, index.entries.size());
    ASSERT_EQ(got.size(), expected.size());
    for (std::size_t i = 0; i < got.size(); ++i)
      EXPECT_EQ(got[i].id, expected[i]) << "query " << q << " position " << i;
  }
}

TEST(Search, SelfQueryReturnsSimilarityOne) {
  const auto index = make_index(50, 16);
  for (const auto& e : {index.entries[0], index.entries[17]}) {
    const auto got = search(index, e.vector, 1);
    ASSERT_EQ(got.size(), 1u);
    EXPECT_EQ(got[0].id, e.id);
    EXPECT_NEAR(got[0].similarity, 1.0, 1e-6);
  }
}

TEST(Search, ExcludesQueryIdAndBreaksTiesById) {
  auto index = make_index(4, 8);
  // Two identical vectors force a similarity tie.
  index.entries[2].vector = index.entries[1].vector;
  const auto got = search(index, index.entries[1].vector, 3, "e-1001");
  ASSERT_GE(got.size(), 1u);
  EXPECT_EQ(got[0].id, "e-1002");  // the duplicate, query itself excluded
  for (const auto& r : got) EXPECT_NE(r.id, "e-1001");
}

TEST(Search, ValidatesKAndDimension) {
  const auto index = make_index(5, 8);
  EXPECT_THROW(search(index, mock_embedding("q", 8), 0), ValidationError);
  EXPECT_THROW(search(index, mock_embedding("q", 9), 1), ValidationError);
}

TEST(Index, SerializeParseRoundTripIsBitExact) {
  auto index = make_index(20, 12, DifficultyCategory::kHumanEasyHigh);
  index.dataset_hash = "feedface";
  index.embed_include_ending = false;
  const std::string bytes = serialize_index(index);
  const auto back = parse_index(bytes);
  EXPECT_EQ(back.category, index.category);
  EXPECT_EQ(back.embedding_model_id, index.embedding_model_id);
  EXPECT_EQ(back.dataset_hash, "feedface");
  EXPECT_FALSE(back.embed_include_ending);
  EXPECT_TRUE(back.embed_include_meaning);
  ASSERT_EQ(back.entries.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(back.entries[i].id, index.entries[i].id);
    EXPECT_EQ(back.entries[i].vector, index.entries[i].vector);  // exact floats
    EXPECT_EQ(back.entries[i].story_text, index.entries[i].story_text);
    EXPECT_EQ(back.entries[i].gold_score, index.entries[i].gold_score);
  }
  EXPECT_EQ(serialize_index(back), bytes);
}

TEST(Index, LoadRejectsModelMismatch) {
  const auto dir = ts::fresh_dir("retrieval_load");
  auto index = make_index(3, 8);
  index.embedding_model_id = "model-a";
  const auto path = dir / index_filename(index.category);
  atomic_write_file(path, serialize_index(index));
  EXPECT_NO_THROW(load_index(path, "model-a"));
  EXPECT_THROW(load_index(path, "model-b"), Error);
}

TEST(Index, FilenamesFollowCategoryNames) {
  EXPECT_EQ(index_filename(DifficultyCategory::kHumanEasyHigh),
            "index_human_easy_high.bin");
  EXPECT_EQ(index_filename(DifficultyCategory::kAmbiguousContext),
            "index_ambiguous_context.bin");
  EXPECT_EQ(index_filename(DifficultyCategory::kHumanEasyLow),
            "index_human_easy_low.bin");
}

TEST(EmbeddingText, OptionsControlEndingAndMeaning) {
  const auto inst = ts::golden_query();
  const auto full = embedding_text(inst, {true, true});
  EXPECT_NE(full.find(inst.sentence), std::string::npos);
  EXPECT_NE(full.find(*inst.ending), std::string::npos);
  EXPECT_NE(full.find(inst.judged_meaning), std::string::npos);
  const auto no_ending = embedding_text(inst, {false, true});
  EXPECT_EQ(no_ending.find(*inst.ending), std::string::npos);
  const auto no_meaning = embedding_text(inst, {true, false});
  EXPECT_EQ(no_meaning.find(inst.judged_meaning), std::string::npos);
}

TEST(BuildIndexes, GroupsByCategoryAndStoresGold) {
  MockScript script;
  script.embedding_dimension = 16;
  MockServer server(script);
  server.start();
  const auto dir = ts::fresh_dir("retrieval_build");
  GatewayConfig config;
  config.base_url = server.base_url();
  config.cache_dir = (dir / "cache").string();
  Gateway gateway(config);

  const auto train = ts::calibration_corpus();
  const auto categories = categorize_all(train, CategoryThresholds{});
  const auto indexes = build_indexes(train, categories, gateway, "hash123");

  EXPECT_EQ(indexes[0].category, DifficultyCategory::kHumanEasyHigh);
  EXPECT_EQ(indexes[1].category, DifficultyCategory::kAmbiguousContext);
  EXPECT_EQ(indexes[2].category, DifficultyCategory::kHumanEasyLow);
  for (const auto& index : indexes) {
    EXPECT_EQ(index.entries.size(), 10u);
    EXPECT_EQ(index.dimension, 16u);
    EXPECT_EQ(index.dataset_hash, "hash123");
    for (const auto& e : index.entries) {
      double norm = 0;
      for (float v : e.vector) norm += static_cast<double>(v) * v;
      EXPECT_NEAR(norm, 1.0, 1e-5);
    }
  }
  // Gold scores reflect the planted annotation patterns.
  EXPECT_EQ(indexes[0].entries[0].gold_score, 5);
  EXPECT_EQ(indexes[1].entries[0].gold_score, 3);
  EXPECT_EQ(indexes[2].entries[0].gold_score, 1);
}

TEST(BuildIndexes, RejectsUnlabeledAndUncategorized) {
  MockServer server(MockScript{});
  server.start();
  const auto dir = ts::fresh_dir("retrieval_build_bad");
  GatewayConfig config;
  config.base_url = server.base_url();
  config.cache_dir = (dir / "cache").string();
  Gateway gateway(config);

  auto train = ts::calibration_corpus();
  auto categories = categorize_all(train, CategoryThresholds{});
  train.push_back(ts::synthetic_instance("no-label", 50, {}));
  EXPECT_THROW(build_indexes(train, categories, gateway), ValidationError);
  train.back() = ts::synthetic_instance("no-category", 51, {3, 3, 3, 3, 3});
  EXPECT_THROW(build_indexes(train, categories, gateway), ValidationError);
}

TEST(FewShotBundle, GroupsKPerCategoryInFixedOrder) {
  MockScript script;
  script.embedding_dimension = 16;
  MockServer server(script);
  server.start();
  const auto dir = ts::fresh_dir("retrieval_bundle");
  GatewayConfig config;
  config.base_url = server.base_url();
  config.cache_dir = (dir / "cache").string();
  Gateway gateway(config);

  const auto train = ts::calibration_corpus();
  const auto categories = categorize_all(train, CategoryThresholds{});
  const auto indexes = build_indexes(train, categories, gateway);

  const auto query = ts::spread_dev()[0];
  const auto bundle = few_shot_bundle(query, 2, indexes, gateway);
  ASSERT_EQ(bundle.size(), 6u);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(bundle[i].category, DifficultyCategory::kHumanEasyHigh);
    EXPECT_EQ(bundle[2 + i].category, DifficultyCategory::kAmbiguousContext);
    EXPECT_EQ(bundle[4 + i].category, DifficultyCategory::kHumanEasyLow);
  }
  // Within each category block similarity is non-increasing.
  EXPECT_GE(bundle[0].similarity, bundle[1].similarity);
  EXPECT_GE(bundle[2].similarity, bundle[3].similarity);
  EXPECT_GE(bundle[4].similarity, bundle[5].similarity);
}

TEST(FewShotBundle, ExcludesQueryFromItsOwnIndex) {
  MockServer server(MockScript{});
  server.start();
  const auto dir = ts::fresh_dir("retrieval_bundle_leak");
  GatewayConfig config;
  config.base_url = server.base_url();
  config.cache_dir = (dir / "cache").string();
  Gateway gateway(config);

  const auto train = ts::calibration_corpus();
  const auto categories = categorize_all(train, CategoryThresholds{});
  const auto indexes = build_indexes(train, categories, gateway);

  // The query is itself a train instance; it must not retrieve itself even
  // though self-similarity would be exactly 1.
  const auto bundle = few_shot_bundle(train[0], 3, indexes, gateway);
  for (const auto& r : bundle) EXPECT_NE(r.id, train[0].id);
}

}  // namespace
