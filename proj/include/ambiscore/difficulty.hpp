#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "ambiscore/corpus.hpp"

namespace ambiscore {

enum class DifficultyCategory { kHumanEasyHigh, kAmbiguousContext, kHumanEasyLow };

inline std::string category_name(DifficultyCategory c) {
  switch (c) {
    case DifficultyCategory::kHumanEasyHigh: return "human_easy_high";
    case DifficultyCategory::kAmbiguousContext: return "ambiguous_context";
    case DifficultyCategory::kHumanEasyLow: return "human_easy_low";
  }
  return "?";
}

inline DifficultyCategory category_from_name(const std::string& name) {
  if (name == "human_easy_high") return DifficultyCategory::kHumanEasyHigh;
  if (name == "ambiguous_context") return DifficultyCategory::kAmbiguousContext;
  if (name == "human_easy_low") return DifficultyCategory::kHumanEasyLow;
  throw ConfigError("unknown difficulty category: " + name);
}

// Human-readable tag shown to models (SFT difficulty strategy).
inline std::string category_tag(DifficultyCategory c) {
  switch (c) {
    case DifficultyCategory::kHumanEasyHigh: return "Human Easy - High Score";
    case DifficultyCategory::kAmbiguousContext: return "Ambiguous Context";
    case DifficultyCategory::kHumanEasyLow: return "Human Easy - Low Score";
  }
  return "?";
}

struct CategoryThresholds {
  double agreement_std_max = 0.9;  // std at or below: annotators agree
  double high_mean_min = 4.0;
  double low_mean_max = 2.0;
  StdConvention std_convention = StdConvention::kSample;

  json to_json() const {
    return json{{"agreement_std_max", agreement_std_max},
                {"high_mean_min", high_mean_min},
                {"low_mean_max", low_mean_max},
                {"std_convention", std_convention_name(std_convention)}};
  }

  static CategoryThresholds from_json(const json& j) {
    CategoryThresholds t;
    t.agreement_std_max = j.at("agreement_std_max").get<double>();
    t.high_mean_min = j.at("high_mean_min").get<double>();
    t.low_mean_max = j.at("low_mean_max").get<double>();
    t.std_convention =
        std_convention_from_name(j.at("std_convention").get<std::string>());
    return t;
  }
};

// Agreed-but-mid-mean instances (e.g. all 3s) fall into AmbiguousContext:
// the two Human-Easy buckets are defined as high and low score only.
inline DifficultyCategory categorize(const AnnotationStats& stats,
                                     const CategoryThresholds& t) {
  const double sd = std_by(stats, t.std_convention);
  if (sd <= t.agreement_std_max) {
    if (stats.mean >= t.high_mean_min) return DifficultyCategory::kHumanEasyHigh;
    if (stats.mean <= t.low_mean_max) return DifficultyCategory::kHumanEasyLow;
  }
  return DifficultyCategory::kAmbiguousContext;
}

// Counts in fixed order: (ambiguous, easy-high, easy-low).
using CategoryCounts = std::array<std::size_t, 3>;

inline CategoryCounts count_categories(
    const std::vector<AnnotationStats>& stats, const CategoryThresholds& t) {
  CategoryCounts counts{0, 0, 0};
  for (const auto& s : stats) {
    switch (categorize(s, t)) {
      case DifficultyCategory::kAmbiguousContext: ++counts[0]; break;
      case DifficultyCategory::kHumanEasyHigh: ++counts[1]; break;
      case DifficultyCategory::kHumanEasyLow: ++counts[2]; break;
    }
  }
  return counts;
}

// Candidate grid for threshold calibration. Values are generated from
// integer steps so grids are exactly reproducible.
struct CalibrationGrid {
  std::vector<double> agreement_std_max;
  std::vector<double> high_mean_min;
  std::vector<double> low_mean_max;
  std::vector<StdConvention> conventions{StdConvention::kSample,
                                         StdConvention::kPopulation};

  static CalibrationGrid default_grid() {
    CalibrationGrid g;
    for (int i = 40; i <= 160; i += 5)
      g.agreement_std_max.push_back(i / 100.0);
    for (int i = 34; i <= 46; ++i) g.high_mean_min.push_back(i / 10.0);
    for (int i = 14; i <= 26; ++i) g.low_mean_max.push_back(i / 10.0);
    return g;
  }

  bool empty() const {
    return agreement_std_max.empty() || high_mean_min.empty() ||
           low_mean_max.empty() || conventions.empty();
  }

  json to_json() const {
    std::vector<std::string> conv;
    for (auto c : conventions) conv.push_back(std_convention_name(c));
    return json{{"agreement_std_max", agreement_std_max},
                {"high_mean_min", high_mean_min},
                {"low_mean_max", low_mean_max},
                {"std_conventions", conv}};
  }

  static CalibrationGrid from_json(const json& j) {
    CalibrationGrid g;
    g.agreement_std_max =
        j.at("agreement_std_max").get<std::vector<double>>();
    g.high_mean_min = j.at("high_mean_min").get<std::vector<double>>();
    g.low_mean_max = j.at("low_mean_max").get<std::vector<double>>();
    if (j.contains("std_conventions")) {
      g.conventions.clear();
      for (const auto& name : j.at("std_conventions"))
        g.conventions.push_back(
            std_convention_from_name(name.get<std::string>()));
    }
    return g;
  }
};

struct CalibrationResult {
  CategoryThresholds thresholds;
  CategoryCounts counts{0, 0, 0};       // achieved (ambiguous, high, low)
  CategoryCounts targets{0, 0, 0};
  std::size_t l1_gap = 0;

  json to_json() const {
    return json{{"thresholds", thresholds.to_json()},
                {"counts",
                 {{"ambiguous_context", counts[0]},
                  {"human_easy_high", counts[1]},
                  {"human_easy_low", counts[2]}}},
                {"targets",
                 {{"ambiguous_context", targets[0]},
                  {"human_easy_high", targets[1]},
                  {"human_easy_low", targets[2]}}},
                {"l1_gap", l1_gap}};
  }
};

// Exhaustive search for the threshold triple whose category counts come
// closest (L1) to the target counts. Ties break toward the smaller
// agreement_std_max, then smaller high_mean_min, then smaller
// low_mean_max, then sample convention, so the argmin is unique.
inline CalibrationResult calibrate_thresholds(
    const std::vector<StoryInstance>& train, const CategoryCounts& targets,
    const CalibrationGrid& grid = CalibrationGrid::default_grid()) {
  if (grid.empty()) throw ValidationError("calibrate_thresholds: empty grid");
  std::vector<AnnotationStats> stats;
  stats.reserve(train.size());
  for (const auto& inst : train)
    if (inst.labeled()) stats.push_back(annotation_stats(inst.annotations));
  if (stats.empty())
    throw ValidationError("calibrate_thresholds: no labeled instances");

  auto l1 = [&](const CategoryCounts& c) {
    std::size_t gap = 0;
    for (int i = 0; i < 3; ++i)
      gap += c[i] > targets[i] ? c[i] - targets[i] : targets[i] - c[i];
    return gap;
  };

  bool have_best = false;
  CalibrationResult best;
  for (auto conv : grid.conventions) {
    for (double sd : grid.agreement_std_max) {
      for (double hi : grid.high_mean_min) {
        for (double lo : grid.low_mean_max) {
          if (!(lo < hi)) continue;
          CategoryThresholds t{sd, hi, lo, conv};
          const auto counts = count_categories(stats, t);
          const auto gap = l1(counts);
          bool better = false;
          if (!have_best || gap < best.l1_gap) {
            better = true;
          } else if (gap == best.l1_gap) {
            const auto& b = best.thresholds;
            if (sd < b.agreement_std_max) better = true;
            else if (sd == b.agreement_std_max && hi < b.high_mean_min)
              better = true;
            else if (sd == b.agreement_std_max && hi == b.high_mean_min &&
                     lo < b.low_mean_max)
              better = true;
            else if (sd == b.agreement_std_max && hi == b.high_mean_min &&
                     lo == b.low_mean_max &&
                     conv == StdConvention::kSample &&
                     b.std_convention == StdConvention::kPopulation)
              better = true;
          }
          if (better) {
            have_best = true;
            best.thresholds = t;
            best.counts = counts;
            best.l1_gap = gap;
          }
        }
      }
    }
  }
  if (!have_best)
    throw ValidationError(
        "calibrate_thresholds: no feasible grid candidate (every low_mean_max "
        ">= high_mean_min)");
  best.targets = targets;
  return best;
}

// Thresholds document persisted with provenance.
inline json thresholds_document(const CalibrationResult& result,
                                const std::string& dataset_hash,
                                const CalibrationGrid& grid) {
  json j = result.to_json();
  j["dataset_hash"] = dataset_hash;
  j["grid"] = grid.to_json();
  return j;
}

inline std::map<std::string, DifficultyCategory> categorize_all(
    const std::vector<StoryInstance>& instances, const CategoryThresholds& t) {
  std::map<std::string, DifficultyCategory> out;
  for (const auto& inst : instances) {
    if (!inst.labeled()) continue;
    out[inst.id] = categorize(annotation_stats(inst.annotations), t);
  }
  return out;
}

}  // namespace ambiscore
