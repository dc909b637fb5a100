#pragma once

// Prompt construction, completion parsing, and per-instance scoring.

#include <atomic>
#include <cstddef>
#include <string>
#include <thread>
#include <vector>

#include "ambiscore/common.hpp"
#include "ambiscore/corpus.hpp"
#include "ambiscore/gateway.hpp"
#include "ambiscore/retrieval.hpp"
#include "ambiscore/run_record.hpp"

namespace ambiscore {

enum class PromptMode { kZeroShot, kFewShot };

inline const char* prompt_mode_name(PromptMode mode) {
  return mode == PromptMode::kZeroShot ? "zero_shot" : "few_shot";
}

inline PromptMode prompt_mode_from_name(const std::string& name) {
  if (name == "zero_shot") return PromptMode::kZeroShot;
  if (name == "few_shot") return PromptMode::kFewShot;
  throw ConfigError("unknown prompt mode: " + name);
}

// The instruction template. The strings below are load-bearing: golden-file
// tests pin the assembled prompt byte-for-byte, so any edit here is a
// deliberate output-format change.
namespace prompt_text {

inline constexpr const char* kIntro =
    "Your task is to rate the plausibility of a word's meaning on a scale of "
    "1-5 based on a short story. You must follow the Thinking Process below "
    "to arrive at your score.";

// Leads with a space: it continues the intro sentence on the same line.
inline constexpr const char* kExamplesLeadIn =
    " You will be provided with few example stories that illustrate the "
    "scoring rubric for different levels of plausibility, based on similar "
    "stories:";

inline constexpr const char* kSteps =
    "Complete each step of this process in your analysis.\n"
    "\n"
    "Instructions:\n"
    "1. Analyze the Context: Read the complete story and identify all clues "
    "that might support or contradict the 'Proposed Meaning'.\n"
    "2. List Evidence For: State the parts of the story that make the "
    "'Proposed Meaning' plausible.\n"
    "3. List Evidence Against: State any parts of the story that make the "
    "'Proposed Meaning' implausible.\n"
    "4. Synthesize and Score: Based on the evidence, provide a final "
    "plausibility score using the rubric below.\n"
    "\n"
    "Scoring Rubric:\n"
    "- 5: Perfectly plausible. The meaning is strongly supported by the "
    "entire context, and all parts of the story form a consistent, logical "
    "narrative.\n"
    "- 4: Very plausible. The meaning fits well and is consistent. There "
    "might be minor ambiguity, but no real contradictions.\n"
    "- 3: Moderately plausible. The meaning is possible, but the context is "
    "ambiguous or contains minor conflicting clues.\n"
    "- 2: Barely plausible. The meaning largely conflicts with the context.\n"
    "- 1: Implausible. The meaning is directly and strongly contradicted by "
    "the context.\n"
    "\n"
    "Do all the reasoning mentally / privately - do not print it; print only "
    "the final integer score as an output.";

inline constexpr const char* kRetryReminder =
    "\nReminder: print only the final integer score.";

}  // namespace prompt_text

struct PromptOptions {
  // Show example gold labels as the raw annotator mean instead of the
  // rounded integer.
  bool raw_mean_labels = false;
};

struct PromptBundle {
  PromptMode mode = PromptMode::kZeroShot;
  std::size_t k = 0;  // examples per difficulty category (0 for zero-shot)
  std::string instance_id;
  std::vector<std::string> example_ids;
  std::string text;

  std::vector<ChatMessage> messages() const { return {{"user", text}}; }
  std::string digest() const { return sha256_hex(text); }
};

namespace detail {

// Stored index story text labels the candidate sense "Meaning:". Inside an
// example block that line becomes "Proposed Meaning:" to match the label the
// query section uses.
inline std::string relabel_example_story(const std::string& story_text) {
  static const std::string kFrom = "Meaning: ";
  static const std::string kTo = "Proposed Meaning: ";
  const auto nl = story_text.rfind('\n');
  const auto start = nl == std::string::npos ? 0 : nl + 1;
  if (story_text.compare(start, kFrom.size(), kFrom) != 0) return story_text;
  std::string out = story_text.substr(0, start);
  out += kTo;
  out += story_text.substr(start + kFrom.size());
  return out;
}

inline std::string example_label(const RetrievedExample& ex,
                                 const PromptOptions& opts) {
  if (opts.raw_mean_labels) return format_real(ex.gold_mean);
  return std::to_string(ex.gold_score);
}

}  // namespace detail

inline PromptBundle build_prompt(const StoryInstance& inst,
                                 const std::vector<RetrievedExample>& examples,
                                 const PromptOptions& opts = {}) {
  if (trim(inst.homonym).empty())
    throw ValidationError("build_prompt: empty homonym for instance " +
                          inst.id);
  if (trim(inst.judged_meaning).empty())
    throw ValidationError("build_prompt: empty judged meaning for instance " +
                          inst.id);
  if (!contains_case_insensitive(inst.sentence, inst.homonym))
    throw ValidationError("build_prompt: homonym \"" + inst.homonym +
                          "\" does not occur in the sentence of instance " +
                          inst.id);
  if (!examples.empty() && examples.size() % 3 != 0)
    throw ValidationError(
        "build_prompt: few-shot example count must be a multiple of 3, got " +
        std::to_string(examples.size()));

  PromptBundle bundle;
  bundle.instance_id = inst.id;
  bundle.mode =
      examples.empty() ? PromptMode::kZeroShot : PromptMode::kFewShot;
  bundle.k = examples.size() / 3;

  std::string text = prompt_text::kIntro;
  if (!examples.empty()) {
    text += prompt_text::kExamplesLeadIn;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const auto& ex = examples[i];
      text += "\n\nExample " + std::to_string(i + 1) + ":\n";
      text += detail::relabel_example_story(ex.story_text);
      text += "\nHuman plausibility score: " + detail::example_label(ex, opts);
      bundle.example_ids.push_back(ex.id);
    }
  }
  text += "\n\nNow evaluate the following story and proposed meaning:\n\n";
  text += "Precontext: " + inst.precontext + "\n";
  text += "Sentence: " + inst.sentence + "\n";
  text += "Ending: " + inst.ending.value_or("") + "\n\n";
  text += "Word: \"" + inst.homonym + "\"\n";
  text += "Proposed Meaning to Evaluate: \"" + inst.judged_meaning + "\"\n\n";
  text += prompt_text::kSteps;

  bundle.text = std::move(text);
  return bundle;
}

struct ParsedScore {
  int score = 0;
  std::string raw_completion;
  std::string parse_path;  // "exact" or "scanned"
};

namespace detail {

// Value of a digit run if it names a score 1..5, else 0. Tolerates leading
// zeros ("05" -> 5).
inline int run_score(const std::string& s, std::size_t begin,
                     std::size_t end) {
  std::size_t i = begin;
  while (i < end && s[i] == '0') ++i;
  if (end - i != 1) return 0;
  const int value = s[i] - '0';
  return value >= 1 && value <= 5 ? value : 0;
}

// A run that is part of a decimal literal ("4.5") names no integer score.
inline bool decimal_embedded(const std::string& s, std::size_t begin,
                             std::size_t end) {
  if (begin >= 2 && s[begin - 1] == '.' &&
      std::isdigit(static_cast<unsigned char>(s[begin - 2])))
    return true;
  if (end + 1 < s.size() && s[end] == '.' &&
      std::isdigit(static_cast<unsigned char>(s[end + 1])))
    return true;
  return false;
}

}  // namespace detail

inline ParsedScore parse_score(const std::string& completion) {
  const std::string trimmed = trim(completion);
  if (trimmed.empty())
    throw ParseError("parse_score: empty completion");

  bool all_digits = !trimmed.empty();
  for (const char c : trimmed)
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      all_digits = false;
      break;
    }
  if (all_digits) {
    if (const int v = detail::run_score(trimmed, 0, trimmed.size()); v != 0)
      return {v, completion, "exact"};
  }

  int last = 0;
  for (std::size_t i = 0; i < completion.size();) {
    if (!std::isdigit(static_cast<unsigned char>(completion[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < completion.size() &&
           std::isdigit(static_cast<unsigned char>(completion[j])))
      ++j;
    if (!detail::decimal_embedded(completion, i, j))
      if (const int v = detail::run_score(completion, i, j); v != 0) last = v;
    i = j;
  }
  if (last != 0) return {last, completion, "scanned"};

  throw ParseError("parse_score: no integer score 1-5 in completion: \"" +
                   (completion.size() > 200 ? completion.substr(0, 200) + "..."
                                            : completion) +
                   "\"");
}

// One-sentence gloss of the homonym's most probable in-context sense. An
// auxiliary signal only; callers must not treat it as ground truth.
inline std::string sense_hint(Gateway& gateway, const StoryInstance& inst) {
  std::string text =
      "In the passage below, the word \"" + inst.homonym +
      "\" is used in one specific sense. State the most probable sense as a "
      "short one-sentence gloss, and print nothing else.\n\n";
  text += inst.precontext + "\n" + inst.sentence;
  if (inst.ending) text += "\n" + *inst.ending;

  ChatRequest request;
  request.model_id = gateway.config().chat_model_id;
  request.messages = {{"user", text}};
  request.temperature = 0.0;
  request.max_tokens = 64;
  const ChatResult result = gateway.chat_complete(request);
  const std::string gloss = trim(result.text);
  if (gloss.empty())
    throw ValidationError("sense_hint: empty gloss for instance " + inst.id);
  return gloss;
}

struct ScoreOptions {
  PromptMode mode = PromptMode::kZeroShot;
  std::size_t k = 1;  // examples per category when mode is few-shot
  PromptOptions prompt;
};

// Scores one instance. Stage failures become a "failed" record rather than
// an exception so a batch always runs to completion.
inline RunRecord score_instance(Gateway& gateway, const StoryInstance& inst,
                                const std::array<CategoryIndex, 3>* indexes,
                                const ScoreOptions& opts = {}) {
  RunRecord rec;
  rec.instance_id = inst.id;
  rec.mode = prompt_mode_name(opts.mode);
  rec.k = opts.mode == PromptMode::kFewShot ? opts.k : 0;
  rec.model_id = gateway.config().chat_model_id;
  rec.status = "failed";

  try {
    std::vector<RetrievedExample> examples;
    if (opts.mode == PromptMode::kFewShot) {
      if (indexes == nullptr)
        throw ValidationError("score_instance: few-shot mode needs indexes");
      examples = few_shot_bundle(inst, opts.k, *indexes, gateway);
    }
    const PromptBundle bundle = build_prompt(inst, examples, opts.prompt);
    rec.example_ids = bundle.example_ids;
    rec.prompt_digest = bundle.digest();

    ChatRequest request;
    request.model_id = gateway.config().chat_model_id;
    request.messages = bundle.messages();
    request.temperature = 0.0;
    const ChatResult first = gateway.chat_complete(request);
    rec.raw_completion = first.text;
    rec.provenance = first.provenance;
    try {
      rec.score = parse_score(first.text).score;
      rec.status = "ok";
      return rec;
    } catch (const ParseError&) {
      // One retry with a terse reminder appended to the same prompt.
      rec.retried = true;
      request.messages = {{"user",
                           bundle.text + prompt_text::kRetryReminder}};
      const ChatResult second = gateway.chat_complete(request);
      rec.raw_completion = second.text;
      rec.provenance = second.provenance;
      rec.score = parse_score(second.text).score;
      rec.status = "ok";
      return rec;
    }
  } catch (const std::exception& e) {
    rec.status = "failed";
    rec.score.reset();
    if (rec.raw_completion.empty()) rec.raw_completion = e.what();
    return rec;
  }
}

// Batch scoring with bounded concurrency; output order matches input order.
inline std::vector<RunRecord> run_batch(
    Gateway& gateway, const std::vector<StoryInstance>& instances,
    const std::array<CategoryIndex, 3>* indexes, const ScoreOptions& opts = {},
    std::size_t workers = 0) {
  if (workers == 0) workers = gateway.config().max_in_flight;
  if (workers < 1) workers = 1;
  workers = std::min(workers, std::max<std::size_t>(instances.size(), 1));

  std::vector<RunRecord> records(instances.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= instances.size()) return;
      records[i] = score_instance(gateway, instances[i], indexes, opts);
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return records;
}

}  // namespace ambiscore
