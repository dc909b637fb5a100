#pragma once

#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ambiscore/corpus.hpp"
#include "ambiscore/difficulty.hpp"
#include "ambiscore/run_record.hpp"

namespace ambiscore {

// Average ranks with ties receiving the mean of the rank positions they
// span (1-based).
inline std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

struct SpearmanResult {
  double rho = 0.0;
  // Set when either side has zero rank variance; rho is reported as 0.
  bool degenerate = false;
};

inline SpearmanResult spearman_full(const std::vector<double>& pred,
                                    const std::vector<double>& gold) {
  if (pred.size() != gold.size())
    throw ValidationError("spearman: length mismatch");
  if (pred.size() < 2) throw ValidationError("spearman: need at least 2 points");
  const auto rp = average_ranks(pred);
  const auto rg = average_ranks(gold);
  const auto n = static_cast<double>(pred.size());
  double mp = 0.0, mg = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    mp += rp[i];
    mg += rg[i];
  }
  mp /= n;
  mg /= n;
  double cov = 0.0, vp = 0.0, vg = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dp = rp[i] - mp;
    const double dg = rg[i] - mg;
    cov += dp * dg;
    vp += dp * dp;
    vg += dg * dg;
  }
  if (vp == 0.0 || vg == 0.0) return {0.0, true};
  return {cov / std::sqrt(vp * vg), false};
}

inline double spearman(const std::vector<double>& pred,
                       const std::vector<double>& gold) {
  return spearman_full(pred, gold).rho;
}

// Fraction of predictions with |pred - mean| <= std under the selected
// convention (boundary inclusive). With std = 0 the instance counts only
// on an exact hit.
inline double acc_within_sd(const std::map<std::string, double>& preds,
                            const std::map<std::string, AnnotationStats>& stats,
                            StdConvention convention) {
  if (preds.empty()) throw ValidationError("acc_within_sd: no predictions");
  std::size_t hits = 0;
  for (const auto& [id, pred] : preds) {
    auto it = stats.find(id);
    if (it == stats.end())
      throw ValidationError("acc_within_sd: no stats for id '" + id + "'");
    const double sd = std_by(it->second, convention);
    const double dev = std::abs(pred - it->second.mean);
    if (sd == 0.0 ? pred == it->second.mean : dev <= sd) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

struct CategoryMetrics {
  std::size_t n = 0;
  double spearman = 0.0;
  bool spearman_degenerate = false;
  double acc_within_sd = 0.0;
};

struct EvalReport {
  double spearman = 0.0;
  double acc_within_sd = 0.0;
  std::size_t n_evaluated = 0;
  std::size_t n_failed = 0;
  StdConvention convention = StdConvention::kSample;
  std::vector<std::string> degenerate_flags;
  std::map<std::string, CategoryMetrics> per_category;

  json to_json() const {
    json j{{"spearman", spearman},
           {"acc_within_sd", acc_within_sd},
           {"n_evaluated", n_evaluated},
           {"n_failed", n_failed},
           {"std_convention", std_convention_name(convention)},
           {"degenerate_flags", degenerate_flags}};
    if (!per_category.empty()) {
      json cats = json::object();
      for (const auto& [name, m] : per_category) {
        cats[name] = {{"n", m.n},
                      {"spearman", m.spearman},
                      {"spearman_degenerate", m.spearman_degenerate},
                      {"acc_within_sd", m.acc_within_sd}};
      }
      j["per_category"] = cats;
    }
    return j;
  }
};

// Joins run records to gold stats, excluding failed records with counts.
// Failed instances are reported, never silently imputed.
inline EvalReport evaluate_run(
    const std::vector<RunRecord>& records,
    const std::map<std::string, AnnotationStats>& stats,
    StdConvention convention = StdConvention::kSample,
    const std::map<std::string, DifficultyCategory>* categories = nullptr) {
  EvalReport report;
  report.convention = convention;
  std::map<std::string, double> preds;
  std::vector<double> pred_vec, gold_vec;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>
      by_category;
  std::map<std::string, std::map<std::string, double>> preds_by_category;

  for (const auto& r : records) {
    if (!r.ok()) {
      ++report.n_failed;
      continue;
    }
    auto it = stats.find(r.instance_id);
    if (it == stats.end())
      throw ValidationError("evaluate_run: unknown instance id '" +
                            r.instance_id + "'");
    preds[r.instance_id] = *r.score;
    pred_vec.push_back(*r.score);
    gold_vec.push_back(it->second.mean);
    ++report.n_evaluated;
    if (categories != nullptr) {
      auto cit = categories->find(r.instance_id);
      if (cit != categories->end()) {
        const std::string name = category_name(cit->second);
        by_category[name].first.push_back(*r.score);
        by_category[name].second.push_back(it->second.mean);
        preds_by_category[name][r.instance_id] = *r.score;
      }
    }
  }
  if (report.n_evaluated == 0)
    throw ValidationError("evaluate_run: zero evaluable records");

  const auto sp = spearman_full(pred_vec, gold_vec);
  report.spearman = sp.rho;
  if (sp.degenerate) report.degenerate_flags.push_back("spearman_zero_variance");
  report.acc_within_sd = acc_within_sd(preds, stats, convention);

  for (const auto& [name, vecs] : by_category) {
    CategoryMetrics m;
    m.n = vecs.first.size();
    if (m.n >= 2) {
      const auto csp = spearman_full(vecs.first, vecs.second);
      m.spearman = csp.rho;
      m.spearman_degenerate = csp.degenerate;
    } else {
      m.spearman_degenerate = true;
    }
    m.acc_within_sd = acc_within_sd(preds_by_category[name], stats, convention);
    report.per_category[name] = m;
  }
  return report;
}

// Per-instance residuals for error analysis.
inline std::string residuals_csv(
    const std::vector<RunRecord>& records,
    const std::map<std::string, AnnotationStats>& stats,
    StdConvention convention = StdConvention::kSample) {
  std::ostringstream out;
  out << "instance_id,pred,gold_mean,gold_std,residual,within_sd\n";
  for (const auto& r : records) {
    if (!r.ok()) continue;
    auto it = stats.find(r.instance_id);
    if (it == stats.end()) continue;
    const double sd = std_by(it->second, convention);
    const double resid = *r.score - it->second.mean;
    const bool within =
        sd == 0.0 ? *r.score == it->second.mean : std::abs(resid) <= sd;
    out << r.instance_id << ',' << *r.score << ',' << it->second.mean << ','
        << sd << ',' << resid << ',' << (within ? 1 : 0) << '\n';
  }
  return out.str();
}

inline std::string eval_report_table(const EvalReport& r) {
  std::ostringstream out;
  out << "metric            value\n";
  out << "spearman          " << r.spearman << "\n";
  out << "acc_within_sd     " << r.acc_within_sd << "\n";
  out << "n_evaluated       " << r.n_evaluated << "\n";
  out << "n_failed          " << r.n_failed << "\n";
  for (const auto& [name, m] : r.per_category) {
    out << name << " (n=" << m.n << "): spearman " << m.spearman
        << ", acc_within_sd " << m.acc_within_sd << "\n";
  }
  return out.str();
}

}  // namespace ambiscore
