#pragma once

// Trainer-agnostic fine-tuning corpora: four export strategies over labeled
// story instances, emitted as line-delimited JSON chat records.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ambiscore/common.hpp"
#include "ambiscore/corpus.hpp"
#include "ambiscore/difficulty.hpp"

namespace ambiscore {

enum class SftStrategy {
  kSingleAnnotator,
  kFiveAnnotator,
  kSingleWithThinking,
  kSingleWithDifficulty,
};

inline const char* sft_strategy_name(SftStrategy s) {
  switch (s) {
    case SftStrategy::kSingleAnnotator: return "single_annotator";
    case SftStrategy::kFiveAnnotator: return "five_annotator";
    case SftStrategy::kSingleWithThinking: return "single_with_thinking";
    case SftStrategy::kSingleWithDifficulty: return "single_with_difficulty";
  }
  throw ValidationError("sft_strategy_name: bad strategy");
}

inline SftStrategy sft_strategy_from_name(const std::string& name) {
  for (const SftStrategy s :
       {SftStrategy::kSingleAnnotator, SftStrategy::kFiveAnnotator,
        SftStrategy::kSingleWithThinking, SftStrategy::kSingleWithDifficulty})
    if (name == sft_strategy_name(s)) return s;
  throw ConfigError("unknown sft strategy: " + name);
}

inline std::vector<SftStrategy> all_sft_strategies() {
  return {SftStrategy::kSingleAnnotator, SftStrategy::kFiveAnnotator,
          SftStrategy::kSingleWithThinking,
          SftStrategy::kSingleWithDifficulty};
}

struct SftRecord {
  SftStrategy strategy = SftStrategy::kSingleAnnotator;
  std::string instance_id;
  std::vector<ChatMessage> messages;
  std::string target;
  // Strategy-specific extras, serialized alongside the core fields.
  std::optional<int> annotator_index;   // single_annotator
  std::optional<double> mean;           // five_annotator
  std::optional<std::string> difficulty;  // single_with_difficulty
};

// Auxiliary inputs for strategies that need them.
struct SftAux {
  std::optional<CategoryThresholds> thresholds;     // single_with_difficulty
  std::map<std::string, std::string> sense_hints;   // single_with_thinking
};

namespace detail {

// Story rendered with the candidate sense labeled the way scoring prompts
// label it.
inline std::string sft_story(const StoryInstance& inst) {
  std::string text = inst.precontext + "\n" + inst.sentence;
  if (inst.ending) text += "\n" + *inst.ending;
  text += "\nWord: " + inst.homonym;
  text += "\nProposed Meaning: " + inst.judged_meaning;
  return text;
}

inline std::string score_only_instruction() {
  return "Rate how plausible the proposed meaning of the word is in this "
         "story, on a scale of 1-5. Respond with the score only.\n\n";
}

}  // namespace detail

inline std::vector<SftRecord> export_strategy(
    const std::vector<StoryInstance>& instances, SftStrategy strategy,
    const SftAux& aux = {}) {
  if (strategy == SftStrategy::kSingleWithDifficulty && !aux.thresholds)
    throw ValidationError(
        "export_strategy: single_with_difficulty needs calibrated "
        "thresholds");

  std::vector<const StoryInstance*> order;
  order.reserve(instances.size());
  for (const auto& inst : instances) {
    if (!inst.labeled())
      throw ValidationError("export_strategy: unlabeled instance " + inst.id);
    order.push_back(&inst);
  }
  std::sort(order.begin(), order.end(),
            [](const StoryInstance* a, const StoryInstance* b) {
              return a->id < b->id;
            });

  std::vector<SftRecord> records;
  for (const StoryInstance* pinst : order) {
    const StoryInstance& inst = *pinst;
    const AnnotationStats stats = annotation_stats(inst.annotations);
    const std::string story = detail::sft_story(inst);

    switch (strategy) {
      case SftStrategy::kSingleAnnotator: {
        // One record per annotator judgment.
        for (std::size_t i = 0; i < inst.annotations.size(); ++i) {
          SftRecord rec;
          rec.strategy = strategy;
          rec.instance_id = inst.id;
          rec.annotator_index = static_cast<int>(i);
          rec.messages = {{"user",
                           detail::score_only_instruction() + story}};
          rec.target = std::to_string(inst.annotations[i]);
          records.push_back(std::move(rec));
        }
        break;
      }
      case SftStrategy::kFiveAnnotator: {
        SftRecord rec;
        rec.strategy = strategy;
        rec.instance_id = inst.id;
        rec.mean = stats.mean;
        rec.messages = {
            {"user",
             "Simulate the judgments of five different annotators rating how "
             "plausible the proposed meaning of the word is in this story, "
             "on a scale of 1-5. Respond with the five scores followed by "
             "their mean.\n\n" +
                 story}};
        std::string target = "[";
        for (std::size_t i = 0; i < inst.annotations.size(); ++i) {
          if (i > 0) target += ", ";
          target += std::to_string(inst.annotations[i]);
        }
        target += "], mean: " + format_real(stats.mean);
        rec.target = std::move(target);
        records.push_back(std::move(rec));
        break;
      }
      case SftStrategy::kSingleWithThinking: {
        const auto hint = aux.sense_hints.find(inst.id);
        if (hint == aux.sense_hints.end())
          throw ValidationError(
              "export_strategy: single_with_thinking is missing a sense "
              "hint for instance " +
              inst.id);
        const PlausibilityBand band = plausibility_band(stats.mean);
        SftRecord rec;
        rec.strategy = strategy;
        rec.instance_id = inst.id;
        rec.messages = {
            {"user",
             "First consider the word's most probable sense in the story and "
             "whether the proposed meaning is plausible, then rate that "
             "plausibility on a scale of 1-5. Respond with the score "
             "only.\n\n" +
                 story + "\n\nSense gloss: " + hint->second +
                 "\nAssessment: " + band_rationale(band)}};
        rec.target = std::to_string(round_score(stats.mean));
        records.push_back(std::move(rec));
        break;
      }
      case SftStrategy::kSingleWithDifficulty: {
        const DifficultyCategory category =
            categorize(stats, *aux.thresholds);
        SftRecord rec;
        rec.strategy = strategy;
        rec.instance_id = inst.id;
        rec.difficulty = category_tag(category);
        rec.messages = {{"user",
                         "Difficulty: " + std::string(category_tag(category)) +
                             "\n\n" + detail::score_only_instruction() +
                             story}};
        rec.target = std::to_string(round_score(stats.mean));
        records.push_back(std::move(rec));
        break;
      }
    }
  }
  return records;
}

inline json sft_record_to_json(const SftRecord& rec) {
  json messages = json::array();
  for (const auto& m : rec.messages)
    messages.push_back({{"role", m.role}, {"text", m.text}});
  json j{{"strategy", sft_strategy_name(rec.strategy)},
         {"instance_id", rec.instance_id},
         {"messages", std::move(messages)},
         {"target", rec.target}};
  if (rec.annotator_index) j["annotator_index"] = *rec.annotator_index;
  if (rec.mean) j["mean"] = *rec.mean;
  if (rec.difficulty) j["difficulty"] = *rec.difficulty;
  return j;
}

inline std::string serialize_sft_records(const std::vector<SftRecord>& records) {
  std::string out;
  for (const auto& rec : records) {
    out += canonical_dump(sft_record_to_json(rec));
    out += '\n';
  }
  return out;
}

}  // namespace ambiscore
