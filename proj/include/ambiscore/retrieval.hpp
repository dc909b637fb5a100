#pragma once

#include <array>
#include <bit>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ambiscore/corpus.hpp"
#include "ambiscore/difficulty.hpp"
#include "ambiscore/gateway.hpp"

namespace ambiscore {

struct IndexEntry {
  std::string id;
  std::vector<float> vector;  // unit L2 norm
  std::string story_text;
  int gold_score = 0;      // rounded gold mean
  double gold_mean = 0.0;  // raw gold mean
};

// Flat exact store over one difficulty category. At most a few thousand
// vectors, so exhaustive scan is both trivial and fully deterministic.
struct CategoryIndex {
  DifficultyCategory category = DifficultyCategory::kAmbiguousContext;
  std::string embedding_model_id;
  std::size_t dimension = 0;
  std::string dataset_hash;
  bool embed_include_ending = true;
  bool embed_include_meaning = true;
  std::vector<IndexEntry> entries;
};

struct RetrievedExample {
  std::string id;
  double similarity = 0.0;
  std::string story_text;
  int gold_score = 0;
  double gold_mean = 0.0;
  DifficultyCategory category = DifficultyCategory::kAmbiguousContext;
};

struct EmbedTextOptions {
  bool include_ending = true;
  bool include_meaning = true;
};

// Text embedded for retrieval; by default the canonical story render
// (sense-aware: the judged meaning is part of the chunk).
inline std::string embedding_text(const StoryInstance& inst,
                                  const EmbedTextOptions& opts) {
  if (opts.include_meaning)
    return render_story_text(inst, opts.include_ending);
  std::string out = inst.precontext;
  out += '\n';
  out += inst.sentence;
  if (opts.include_ending && inst.ending.has_value()) {
    out += '\n';
    out += *inst.ending;
  }
  out += "\nWord: " + inst.homonym;
  return out;
}

inline void normalize_unit(std::vector<float>& v) {
  double norm2 = 0.0;
  for (float x : v) norm2 += static_cast<double>(x) * x;
  if (norm2 <= 0.0)
    throw ValidationError("cannot unit-normalize a zero vector");
  const auto inv = static_cast<float>(1.0 / std::sqrt(norm2));
  for (auto& x : v) x *= inv;
}

inline double dot(const std::vector<float>& a, const std::vector<float>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += static_cast<double>(a[i]) * b[i];
  return s;
}

// Builds the three per-category stores. Every instance lands in exactly
// one index matching its category; embeddings go through the gateway
// (and therefore its cache).
inline std::array<CategoryIndex, 3> build_indexes(
    const std::vector<StoryInstance>& instances,
    const std::map<std::string, DifficultyCategory>& categories,
    Gateway& gateway, const std::string& dataset_hash = {},
    const EmbedTextOptions& opts = {}) {
  static constexpr std::array<DifficultyCategory, 3> kOrder{
      DifficultyCategory::kHumanEasyHigh,
      DifficultyCategory::kAmbiguousContext,
      DifficultyCategory::kHumanEasyLow};

  std::array<CategoryIndex, 3> indexes;
  for (std::size_t i = 0; i < 3; ++i) {
    indexes[i].category = kOrder[i];
    indexes[i].embedding_model_id = gateway.config().embedding_model_id;
    indexes[i].dataset_hash = dataset_hash;
    indexes[i].embed_include_ending = opts.include_ending;
    indexes[i].embed_include_meaning = opts.include_meaning;
  }

  std::vector<const StoryInstance*> ordered;
  for (const auto& inst : instances) {
    if (!inst.labeled())
      throw ValidationError("build_indexes: unlabeled instance '" + inst.id +
                            "'");
    if (categories.find(inst.id) == categories.end())
      throw ValidationError("build_indexes: uncategorized instance '" +
                            inst.id + "'");
    ordered.push_back(&inst);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const StoryInstance* a, const StoryInstance* b) {
              return a->id < b->id;
            });

  std::vector<std::string> texts;
  texts.reserve(ordered.size());
  for (const auto* inst : ordered) texts.push_back(embedding_text(*inst, opts));
  auto vectors =
      gateway.embed(texts, gateway.config().embedding_model_id);

  std::set<std::string> seen;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    const auto& inst = *ordered[i];
    if (!seen.insert(inst.id).second)
      throw ValidationError("build_indexes: duplicate instance id '" +
                            inst.id + "'");
    normalize_unit(vectors[i]);
    const auto stats = annotation_stats(inst.annotations);
    IndexEntry entry{inst.id, std::move(vectors[i]), texts[i],
                     round_score(stats.mean), stats.mean};
    const auto cat = categories.at(inst.id);
    for (auto& index : indexes) {
      if (index.category == cat) {
        index.entries.push_back(std::move(entry));
        break;
      }
    }
  }
  for (auto& index : indexes) {
    index.dimension = index.entries.empty() ? 0 : index.entries[0].vector.size();
    for (const auto& e : index.entries)
      if (e.vector.size() != index.dimension)
        throw ValidationError("build_indexes: embedding dimension drift");
  }
  return indexes;
}

// Exact top-k by cosine similarity (dot product of unit vectors).
// Ties break by id ascending; truncates to min(k, |entries|).
inline std::vector<RetrievedExample> search(const CategoryIndex& index,
                                            std::vector<float> query,
                                            std::size_t k,
                                            const std::string& exclude_id = {}) {
  if (k < 1) throw ValidationError("search: k must be >= 1");
  if (query.size() != index.dimension)
    throw ValidationError("search: query dimension " +
                          std::to_string(query.size()) + " != index dimension " +
                          std::to_string(index.dimension));
  normalize_unit(query);
  std::vector<RetrievedExample> scored;
  scored.reserve(index.entries.size());
  for (const auto& e : index.entries) {
    if (!exclude_id.empty() && e.id == exclude_id) continue;
    scored.push_back({e.id, dot(query, e.vector), e.story_text, e.gold_score,
                      e.gold_mean, index.category});
  }
  std::sort(scored.begin(), scored.end(),
            [](const RetrievedExample& a, const RetrievedExample& b) {
              if (a.similarity != b.similarity)
                return a.similarity > b.similarity;
              return a.id < b.id;
            });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

// k examples from each category, grouped in fixed order (easy-high,
// ambiguous, easy-low), similarity-ranked within each group. The query
// instance's own index entry is excluded so dev-set experiments cannot
// leak their demonstration.
inline std::vector<RetrievedExample> few_shot_bundle(
    const StoryInstance& query_instance, std::size_t k,
    const std::array<CategoryIndex, 3>& indexes, Gateway& gateway) {
  for (const auto& index : indexes)
    if (index.entries.empty())
      throw ValidationError("few_shot_bundle: empty index for category " +
                            category_name(index.category));
  EmbedTextOptions opts{indexes[0].embed_include_ending,
                        indexes[0].embed_include_meaning};
  const std::string text = embedding_text(query_instance, opts);
  auto vectors = gateway.embed({text}, indexes[0].embedding_model_id);
  std::vector<RetrievedExample> bundle;
  for (const auto& index : indexes) {
    auto part = search(index, vectors[0], k, query_instance.id);
    bundle.insert(bundle.end(), part.begin(), part.end());
  }
  return bundle;
}

namespace detail {

inline void append_f32_le(std::string& out, float value) {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  out.push_back(static_cast<char>(bits & 0xff));
  out.push_back(static_cast<char>((bits >> 8) & 0xff));
  out.push_back(static_cast<char>((bits >> 16) & 0xff));
  out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

inline float read_f32_le(const char* p) {
  const std::uint32_t bits =
      static_cast<std::uint32_t>(static_cast<unsigned char>(p[0])) |
      (static_cast<std::uint32_t>(static_cast<unsigned char>(p[1])) << 8) |
      (static_cast<std::uint32_t>(static_cast<unsigned char>(p[2])) << 16) |
      (static_cast<std::uint32_t>(static_cast<unsigned char>(p[3])) << 24);
  return std::bit_cast<float>(bits);
}

}  // namespace detail

// File layout: one JSON header line, then count*dimension little-endian
// 32-bit floats.
inline std::string serialize_index(const CategoryIndex& index) {
  json entries = json::array();
  for (const auto& e : index.entries)
    entries.push_back({{"id", e.id},
                       {"story_text", e.story_text},
                       {"gold_score", e.gold_score},
                       {"gold_mean", e.gold_mean}});
  json header{{"format", "ambiscore-index-v1"},
              {"category", category_name(index.category)},
              {"embedding_model_id", index.embedding_model_id},
              {"dimension", index.dimension},
              {"dataset_hash", index.dataset_hash},
              {"embed_include_ending", index.embed_include_ending},
              {"embed_include_meaning", index.embed_include_meaning},
              {"count", index.entries.size()},
              {"entries", entries}};
  std::string out = canonical_dump(header);
  out += '\n';
  for (const auto& e : index.entries)
    for (float x : e.vector) detail::append_f32_le(out, x);
  return out;
}

inline CategoryIndex parse_index(const std::string& raw) {
  const auto newline = raw.find('\n');
  if (newline == std::string::npos)
    throw ParseError("index file: missing header line");
  json header;
  try {
    header = json::parse(raw.substr(0, newline));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("index header: ") + e.what());
  }
  if (header.value("format", std::string{}) != "ambiscore-index-v1")
    throw ParseError("index file: unknown format tag");

  CategoryIndex index;
  index.category = category_from_name(header.at("category").get<std::string>());
  index.embedding_model_id =
      header.at("embedding_model_id").get<std::string>();
  index.dimension = header.at("dimension").get<std::size_t>();
  index.dataset_hash = header.at("dataset_hash").get<std::string>();
  index.embed_include_ending = header.value("embed_include_ending", true);
  index.embed_include_meaning = header.value("embed_include_meaning", true);
  const auto count = header.at("count").get<std::size_t>();

  const std::size_t expected = count * index.dimension * 4;
  if (raw.size() - newline - 1 != expected)
    throw ParseError("index file: vector block is " +
                     std::to_string(raw.size() - newline - 1) +
                     " bytes, expected " + std::to_string(expected));
  const char* block = raw.data() + newline + 1;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& ej = header.at("entries").at(i);
    IndexEntry e;
    e.id = ej.at("id").get<std::string>();
    e.story_text = ej.at("story_text").get<std::string>();
    e.gold_score = ej.at("gold_score").get<int>();
    e.gold_mean = ej.value("gold_mean", static_cast<double>(e.gold_score));
    e.vector.resize(index.dimension);
    for (std::size_t d = 0; d < index.dimension; ++d)
      e.vector[d] = detail::read_f32_le(block + (i * index.dimension + d) * 4);
    double norm2 = 0.0;
    for (float x : e.vector) norm2 += static_cast<double>(x) * x;
    if (std::abs(norm2 - 1.0) > 2e-6)
      throw ValidationError("index entry '" + e.id + "' is not unit-norm");
    if (!seen.insert(e.id).second)
      throw ValidationError("index file: duplicate id '" + e.id + "'");
    index.entries.push_back(std::move(e));
  }
  return index;
}

// Loader validating the persisted header against the active config.
inline CategoryIndex load_index(const std::filesystem::path& path,
                                const std::string& expect_model_id) {
  auto index = parse_index(read_file(path));
  if (!expect_model_id.empty() &&
      index.embedding_model_id != expect_model_id)
    throw ConfigError("index " + path.string() + " was built with model '" +
                      index.embedding_model_id + "', config wants '" +
                      expect_model_id + "'");
  return index;
}

inline std::string index_filename(DifficultyCategory c) {
  return "index_" + category_name(c) + ".bin";
}

}  // namespace ambiscore
