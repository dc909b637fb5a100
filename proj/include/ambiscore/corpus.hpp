#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ambiscore/common.hpp"

namespace ambiscore {

enum class Split { kTrain, kDev, kTest };

inline std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "?";
}

inline Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "dev") return Split::kDev;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split: " + name);
}

// One narrative item: precontext, ambiguous sentence, optional ending,
// the homonym, the candidate sense under judgment, and the per-annotator
// scores (empty for unlabeled test data).
struct StoryInstance {
  std::string id;
  Split split = Split::kTrain;
  std::string homonym;
  std::string precontext;
  std::string sentence;
  std::optional<std::string> ending;
  std::string judged_meaning;
  std::vector<int> annotations;

  bool labeled() const { return !annotations.empty(); }

  bool operator==(const StoryInstance&) const = default;
};

struct AnnotationStats {
  double mean = 0.0;
  double std_sample = 0.0;      // n-1 denominator
  double std_population = 0.0;  // n denominator
  std::array<int, 5> histogram{};
};

enum class StdConvention { kSample, kPopulation };

inline std::string std_convention_name(StdConvention c) {
  return c == StdConvention::kSample ? "sample" : "population";
}

inline StdConvention std_convention_from_name(const std::string& name) {
  if (name == "sample") return StdConvention::kSample;
  if (name == "population") return StdConvention::kPopulation;
  throw ConfigError("unknown std convention: " + name);
}

inline double std_by(const AnnotationStats& s, StdConvention c) {
  return c == StdConvention::kSample ? s.std_sample : s.std_population;
}

enum class PlausibilityBand { kHigh, kModerate, kSlight, kNotPlausible };

inline std::string band_name(PlausibilityBand b) {
  switch (b) {
    case PlausibilityBand::kHigh: return "High";
    case PlausibilityBand::kModerate: return "Moderate";
    case PlausibilityBand::kSlight: return "Slight";
    case PlausibilityBand::kNotPlausible: return "NotPlausible";
  }
  return "?";
}

// Canonical per-band rationale sentence, reused verbatim by the SFT
// exporter's reasoning scaffold.
inline std::string band_rationale(PlausibilityBand b) {
  switch (b) {
    case PlausibilityBand::kHigh:
      return "Meaning strongly fits the context and the ending, indicating "
             "high plausibility.";
    case PlausibilityBand::kModerate:
      return "Meaning reasonably fits the context and the ending, indicating "
             "moderate plausibility.";
    case PlausibilityBand::kSlight:
      return "Meaning shows a weak connection to the context and the ending, "
             "indicating slight plausibility.";
    case PlausibilityBand::kNotPlausible:
      return "Meaning does not fit the context or the ending and is therefore "
             "not plausible.";
  }
  return "?";
}

inline AnnotationStats annotation_stats(const std::vector<int>& annotations) {
  if (annotations.empty())
    throw ValidationError("annotation_stats: empty annotation list");
  AnnotationStats out;
  double sum = 0.0;
  for (int a : annotations) {
    if (a < 1 || a > 5)
      throw ValidationError("annotation_stats: annotation outside [1,5]: " +
                            std::to_string(a));
    sum += a;
    out.histogram[static_cast<std::size_t>(a - 1)] += 1;
  }
  const auto n = static_cast<double>(annotations.size());
  out.mean = sum / n;
  double ss = 0.0;
  for (int a : annotations) {
    const double d = a - out.mean;
    ss += d * d;
  }
  out.std_population = std::sqrt(ss / n);
  out.std_sample = annotations.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return out;
}

// Band boundaries sit exactly at 4.0 / 3.0 / 2.0 on the mean.
inline PlausibilityBand plausibility_band(double mean) {
  if (!(mean >= 1.0 && mean <= 5.0))
    throw ValidationError("plausibility_band: mean outside [1,5]: " +
                          format_real(mean));
  if (mean >= 4.0) return PlausibilityBand::kHigh;
  if (mean >= 3.0) return PlausibilityBand::kModerate;
  if (mean >= 2.0) return PlausibilityBand::kSlight;
  return PlausibilityBand::kNotPlausible;
}

// Canonical story rendering, used both for retrieval-store chunks and for
// display inside prompts. Byte-deterministic; no trailing newline.
inline std::string render_story_text(const StoryInstance& instance,
                                     bool include_ending) {
  std::string out = instance.precontext;
  out += '\n';
  out += instance.sentence;
  if (include_ending && instance.ending.has_value()) {
    out += '\n';
    out += *instance.ending;
  }
  out += "\nWord: " + instance.homonym;
  out += "\nMeaning: " + instance.judged_meaning;
  return out;
}

// Maps canonical field names to the names used in a source file. The
// AmbiStory releases never published a fixed schema, so the mapping is a
// user-supplied config; defaults follow the prompt placeholder names.
struct FieldMapping {
  std::string id = "id";
  std::string homonym = "homonym";
  std::string precontext = "precontext";
  std::string sentence = "sentence";
  std::string ending = "ending";
  std::string judged_meaning = "judged_meaning";
  std::string annotations = "annotations";

  static FieldMapping from_json(const json& j) {
    FieldMapping m;
    auto get = [&j](const char* key, std::string& slot) {
      if (j.contains(key)) slot = j.at(key).get<std::string>();
    };
    get("id", m.id);
    get("homonym", m.homonym);
    get("precontext", m.precontext);
    get("sentence", m.sentence);
    get("ending", m.ending);
    get("judged_meaning", m.judged_meaning);
    get("annotations", m.annotations);
    return m;
  }

  json to_json() const {
    return json{{"id", id},
                {"homonym", homonym},
                {"precontext", precontext},
                {"sentence", sentence},
                {"ending", ending},
                {"judged_meaning", judged_meaning},
                {"annotations", annotations}};
  }
};

struct RecordIssue {
  std::size_t line = 0;  // 1-based record line (JSONL) or array position
  std::string message;
  bool rejected = false;
};

struct ParseResult {
  std::vector<StoryInstance> instances;
  std::vector<RecordIssue> issues;

  std::size_t rejected_count() const {
    std::size_t n = 0;
    for (const auto& i : issues) n += i.rejected ? 1 : 0;
    return n;
  }
};

struct ParseOptions {
  FieldMapping field_map;
  // When set, records without annotations are rejected (calibration and
  // evaluation need labels); otherwise they are accepted unlabeled.
  bool require_labels = false;
};

namespace detail {

inline std::optional<StoryInstance> parse_record(const json& rec, Split split,
                                                 const ParseOptions& opts,
                                                 std::size_t line,
                                                 std::size_t position,
                                                 std::vector<RecordIssue>& issues) {
  const FieldMapping& fm = opts.field_map;
  auto reject = [&](const std::string& msg) {
    issues.push_back({line, msg, true});
    return std::nullopt;
  };
  if (!rec.is_object()) return reject("record is not a JSON object");

  StoryInstance inst;
  inst.split = split;
  auto get_string = [&](const std::string& key, std::string& slot) {
    if (!rec.contains(key)) return false;
    const auto& v = rec.at(key);
    if (v.is_string())
      slot = trim(v.get<std::string>());
    else
      slot = trim(v.dump());
    return true;
  };
  if (!get_string(fm.id, inst.id) || inst.id.empty())
    inst.id = split_name(split) + "-" + std::to_string(position);
  if (!get_string(fm.homonym, inst.homonym))
    return reject("missing required field '" + fm.homonym + "'");
  if (!get_string(fm.precontext, inst.precontext))
    return reject("missing required field '" + fm.precontext + "'");
  if (!get_string(fm.sentence, inst.sentence))
    return reject("missing required field '" + fm.sentence + "'");
  if (!get_string(fm.judged_meaning, inst.judged_meaning))
    return reject("missing required field '" + fm.judged_meaning + "'");
  std::string ending;
  if (get_string(fm.ending, ending) && !ending.empty()) inst.ending = ending;

  if (inst.homonym.empty() ||
      !contains_case_insensitive(inst.sentence, inst.homonym))
    return reject("homonym '" + inst.homonym +
                  "' does not occur in the sentence");

  if (rec.contains(fm.annotations) && !rec.at(fm.annotations).is_null()) {
    const auto& anns = rec.at(fm.annotations);
    if (!anns.is_array()) return reject("annotations field is not an array");
    for (const auto& a : anns) {
      if (!a.is_number_integer())
        return reject("annotation is not an integer: " + a.dump());
      const auto v = a.get<int>();
      if (v < 1 || v > 5)
        return reject("annotation outside [1,5]: " + std::to_string(v));
      inst.annotations.push_back(v);
    }
  }

  if (inst.annotations.empty()) {
    if (opts.require_labels)
      return reject("record has no annotations but labels are required");
  } else if (inst.annotations.size() != 5) {
    issues.push_back({line,
                      "expected 5 annotations, got " +
                          std::to_string(inst.annotations.size()) +
                          "; accepting",
                      false});
  }
  return inst;
}

}  // namespace detail

// Accepts a JSON array or line-delimited JSON records (UTF-8). Rejected
// records are reported with their line numbers; the remainder parses.
inline ParseResult parse_dataset(const std::string& raw, Split split,
                                 const ParseOptions& opts = {}) {
  ParseResult result;
  const std::string body = trim(raw);
  if (body.empty()) return result;

  auto handle = [&](const json& rec, std::size_t line, std::size_t position) {
    auto inst = detail::parse_record(rec, split, opts, line, position,
                                     result.issues);
    if (inst.has_value()) result.instances.push_back(std::move(*inst));
  };

  if (body.front() == '[') {
    json arr;
    try {
      arr = json::parse(body);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), e.byte);
    }
    if (!arr.is_array()) throw ParseError("top-level JSON value is not an array");
    std::size_t pos = 0;
    for (const auto& rec : arr) handle(rec, ++pos, pos);
  } else {
    std::istringstream stream(raw);
    std::string linebuf;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (std::getline(stream, linebuf)) {
      ++lineno;
      const std::string t = trim(linebuf);
      if (t.empty()) continue;
      json rec;
      try {
        rec = json::parse(t);
      } catch (const json::parse_error& e) {
        throw ParseError("malformed JSON on line " + std::to_string(lineno) +
                             ": " + e.what(),
                         e.byte);
      }
      handle(rec, lineno, ++pos);
    }
  }
  return result;
}

// Canonical export schema; parse(serialize(x)) == x.
inline json instance_to_json(const StoryInstance& inst) {
  json j;
  j["id"] = inst.id;
  j["split"] = split_name(inst.split);
  j["homonym"] = inst.homonym;
  j["precontext"] = inst.precontext;
  j["sentence"] = inst.sentence;
  if (inst.ending.has_value()) j["ending"] = *inst.ending;
  j["judged_meaning"] = inst.judged_meaning;
  j["annotations"] = inst.annotations;
  return j;
}

inline StoryInstance instance_from_json(const json& j) {
  StoryInstance inst;
  inst.id = j.at("id").get<std::string>();
  inst.split = split_from_name(j.at("split").get<std::string>());
  inst.homonym = j.at("homonym").get<std::string>();
  inst.precontext = j.at("precontext").get<std::string>();
  inst.sentence = j.at("sentence").get<std::string>();
  if (j.contains("ending")) inst.ending = j.at("ending").get<std::string>();
  inst.judged_meaning = j.at("judged_meaning").get<std::string>();
  inst.annotations = j.at("annotations").get<std::vector<int>>();
  return inst;
}

inline std::string serialize_instances(const std::vector<StoryInstance>& v) {
  std::string out;
  for (const auto& inst : v) {
    out += canonical_dump(instance_to_json(inst));
    out += '\n';
  }
  return out;
}

struct DatasetSummary {
  std::size_t count = 0;
  std::size_t labeled = 0;
  std::size_t distinct_homonyms = 0;
};

inline DatasetSummary summarize_dataset(const std::vector<StoryInstance>& v) {
  DatasetSummary s;
  s.count = v.size();
  std::set<std::string> homonyms;
  for (const auto& inst : v) {
    if (inst.labeled()) ++s.labeled;
    homonyms.insert(to_lower(inst.homonym));
  }
  s.distinct_homonyms = homonyms.size();
  return s;
}

}  // namespace ambiscore
