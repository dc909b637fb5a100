#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ambiscore/common.hpp"

namespace ambiscore {

// One (instance, model, prompting-mode) prediction. Ensemble predictions
// reuse the same shape with a real-valued score and mode "ensemble".
struct RunRecord {
  std::string instance_id;
  std::string mode;  // "zero_shot" | "few_shot" | "ensemble"
  int k = 0;         // examples per category; 0 for zero-shot
  std::string model_id;
  std::optional<double> score;  // absent when status != "ok"
  std::string status = "ok";    // "ok" | "failed"
  std::string prompt_digest;
  std::vector<std::string> example_ids;
  std::string raw_completion;
  // Where the completion came from ("network" | "cache" | "ensemble").
  // Deliberately not serialized: a warm-cache rerun must reproduce record
  // files byte-for-byte, and provenance is the one field that would differ.
  std::string provenance;
  bool retried = false;

  bool ok() const { return status == "ok" && score.has_value(); }

  json to_json() const {
    json j;
    j["instance_id"] = instance_id;
    j["mode"] = mode;
    j["k"] = k;
    j["model_id"] = model_id;
    if (score.has_value())
      j["score"] = *score;
    else
      j["score"] = nullptr;
    j["status"] = status;
    j["prompt_digest"] = prompt_digest;
    j["example_ids"] = example_ids;
    j["raw_completion"] = raw_completion;
    j["retried"] = retried;
    return j;
  }

  static RunRecord from_json(const json& j) {
    RunRecord r;
    r.instance_id = j.at("instance_id").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    r.k = j.at("k").get<int>();
    r.model_id = j.at("model_id").get<std::string>();
    if (j.contains("score") && !j.at("score").is_null())
      r.score = j.at("score").get<double>();
    r.status = j.at("status").get<std::string>();
    r.prompt_digest = j.value("prompt_digest", std::string{});
    if (j.contains("example_ids"))
      r.example_ids = j.at("example_ids").get<std::vector<std::string>>();
    r.raw_completion = j.value("raw_completion", std::string{});
    r.provenance = j.value("provenance", std::string{});
    r.retried = j.value("retried", false);
    return r;
  }
};

inline std::string serialize_run_records(const std::vector<RunRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += canonical_dump(r.to_json());
    out += '\n';
  }
  return out;
}

inline std::vector<RunRecord> parse_run_records(const std::string& raw) {
  std::vector<RunRecord> out;
  std::istringstream stream(raw);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(stream, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    try {
      out.push_back(RunRecord::from_json(json::parse(t)));
    } catch (const json::exception& e) {
      throw ParseError("run record line " + std::to_string(lineno) + ": " +
                       e.what());
    }
  }
  return out;
}

}  // namespace ambiscore
