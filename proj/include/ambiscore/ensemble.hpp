#pragma once

// Meta-ensemble strategies over base-model score vectors: majority vote,
// (performance-)weighted averaging, and stacked regressors (linear, epsilon-SVR
// with an RBF kernel trained by SMO, gradient-boosted trees), plus k-fold
// cross-validation and grid selection.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ambiscore/common.hpp"
#include "ambiscore/metrics.hpp"
#include "ambiscore/run_record.hpp"

namespace ambiscore {

// ---------------------------------------------------------------------------
// Feature matrix

struct FeatureMatrix {
  std::vector<std::string> row_ids;     // instance ids
  std::vector<std::string> column_ids;  // base model names
  std::vector<std::vector<double>> rows;

  std::size_t n_rows() const { return rows.size(); }
  std::size_t n_cols() const { return column_ids.size(); }

  std::vector<double> column(std::size_t c) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.at(c));
    return out;
  }
};

struct FeatureBuild {
  FeatureMatrix matrix;
  // Instances lacking an ok score in at least one run, with the offending
  // columns; dropped from the matrix but reported.
  std::map<std::string, std::vector<std::string>> dropped;
};

// Joins N scored runs into a dense matrix on instance_id. Any instance
// without a usable score in every run is dropped with a report.
inline FeatureBuild build_feature_matrix(
    const std::vector<std::pair<std::string, std::vector<RunRecord>>>& runs) {
  if (runs.size() < 2)
    throw ValidationError("build_feature_matrix: need at least 2 runs, got " +
                          std::to_string(runs.size()));
  std::vector<std::map<std::string, double>> scores(runs.size());
  std::map<std::string, int> seen;  // id -> number of runs mentioning it
  for (std::size_t c = 0; c < runs.size(); ++c) {
    std::map<std::string, bool> in_run;
    for (const auto& rec : runs[c].second) {
      if (in_run.count(rec.instance_id))
        throw ValidationError("build_feature_matrix: duplicate instance " +
                              rec.instance_id + " in run " + runs[c].first);
      in_run[rec.instance_id] = true;
      seen[rec.instance_id]++;
      if (rec.ok()) scores[c][rec.instance_id] = *rec.score;
    }
  }

  FeatureBuild out;
  for (const auto& [name, records] : runs)
    out.matrix.column_ids.push_back(name);
  for (const auto& [id, count] : seen) {
    std::vector<std::string> missing;
    for (std::size_t c = 0; c < runs.size(); ++c)
      if (!scores[c].count(id)) missing.push_back(runs[c].first);
    if (!missing.empty()) {
      out.dropped[id] = std::move(missing);
      continue;
    }
    out.matrix.row_ids.push_back(id);
    std::vector<double> row;
    row.reserve(runs.size());
    for (std::size_t c = 0; c < runs.size(); ++c) row.push_back(scores[c][id]);
    out.matrix.rows.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Voting and averaging

// Modal score; ties among maximal-count scores resolve to the rounded mean
// of the tied distinct scores. Expected arity is the feature column count
// (5 in the reference setup).
inline int majority_vote(const std::vector<int>& scores) {
  if (scores.empty()) throw ValidationError("majority_vote: empty score list");
  std::array<int, 6> counts{};
  for (const int s : scores) {
    if (s < 1 || s > 5)
      throw ValidationError("majority_vote: score out of range: " +
                            std::to_string(s));
    counts[s]++;
  }
  const int top = *std::max_element(counts.begin() + 1, counts.end());
  double sum = 0;
  int tied = 0;
  for (int s = 1; s <= 5; ++s)
    if (counts[s] == top) {
      sum += s;
      tied++;
    }
  return round_score(sum / tied);
}

inline int weighted_average(const std::vector<double>& scores,
                            const std::vector<double>& weights) {
  if (scores.size() != weights.size() || scores.empty())
    throw ValidationError("weighted_average: size mismatch");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9)
    throw ValidationError("weighted_average: weights sum to " +
                          format_real(total) + ", expected 1");
  double acc = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    acc += weights[i] * scores[i];
  return round_score(acc);
}

inline std::vector<double> equal_weights(std::size_t n) {
  if (n == 0) throw ValidationError("equal_weights: n must be positive");
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

// Normalizes per-model dev metrics into weights; all-zero metrics fall back
// to equal weights.
inline std::vector<double> perf_weights(const std::vector<double>& metrics) {
  if (metrics.empty()) throw ValidationError("perf_weights: empty metrics");
  double total = 0;
  for (const double m : metrics) {
    if (m < 0)
      throw ValidationError("perf_weights: negative metric " + format_real(m) +
                            " (floor at zero before calling)");
    total += m;
  }
  if (total <= 0) return equal_weights(metrics.size());
  std::vector<double> w;
  w.reserve(metrics.size());
  for (const double m : metrics) w.push_back(m / total);
  return w;
}

// ---------------------------------------------------------------------------
// Model parameter types

enum class EnsembleKind {
  kMajorityVote,
  kEqualWeight,
  kPerfWeight,
  kLinear,
  kSvr,
  kGbt,
};

inline const char* ensemble_kind_name(EnsembleKind kind) {
  switch (kind) {
    case EnsembleKind::kMajorityVote: return "majority_vote";
    case EnsembleKind::kEqualWeight: return "equal_weight";
    case EnsembleKind::kPerfWeight: return "perf_weight";
    case EnsembleKind::kLinear: return "linear";
    case EnsembleKind::kSvr: return "svr";
    case EnsembleKind::kGbt: return "gbt";
  }
  throw ValidationError("ensemble_kind_name: bad kind");
}

inline EnsembleKind ensemble_kind_from_name(const std::string& name) {
  static const std::map<std::string, EnsembleKind> kMap = {
      {"majority_vote", EnsembleKind::kMajorityVote},
      {"equal_weight", EnsembleKind::kEqualWeight},
      {"perf_weight", EnsembleKind::kPerfWeight},
      {"linear", EnsembleKind::kLinear},
      {"svr", EnsembleKind::kSvr},
      {"gbt", EnsembleKind::kGbt},
  };
  const auto it = kMap.find(name);
  if (it == kMap.end())
    throw ConfigError("unknown ensemble kind: " + name);
  return it->second;
}

inline std::vector<std::string> all_ensemble_kinds() {
  return {"majority_vote", "equal_weight", "perf_weight",
          "linear",        "svr",          "gbt"};
}

struct LinearModel {
  double intercept = 0.0;
  std::vector<double> coefficients;
};

struct SvrParams {
  double C = 1.0;
  double epsilon = 0.1;
  double gamma = 0.5;
};

struct SvrModel {
  SvrParams params;
  // Standardization stats, stored so inference is self-contained.
  std::vector<double> feature_mean;
  std::vector<double> feature_std;
  // Support vectors live in standardized space.
  std::vector<std::vector<double>> support_vectors;
  std::vector<double> coefficients;  // alpha_i - alpha*_i per support vector
  double bias = 0.0;
  std::size_t iterations = 0;
};

struct GbtParams {
  std::size_t trees = 200;
  std::size_t depth = 3;
  double learning_rate = 0.1;
  std::size_t min_leaf = 5;
};

struct GbtNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output
};

struct GbtTree {
  std::vector<GbtNode> nodes;  // node 0 is the root

  double predict(const std::vector<double>& x) const {
    int at = 0;
    for (;;) {
      const GbtNode& node = nodes[static_cast<std::size_t>(at)];
      if (node.feature < 0) return node.value;
      at = x[static_cast<std::size_t>(node.feature)] <= node.threshold
               ? node.left
               : node.right;
    }
  }
};

struct GbtModel {
  GbtParams params;
  double base = 0.0;  // initial prediction: mean of training targets
  std::vector<GbtTree> trees;
};

struct EnsembleModel {
  EnsembleKind kind = EnsembleKind::kEqualWeight;
  std::vector<std::string> column_ids;
  std::vector<double> weights;       // equal/perf weighting
  std::string weight_metric;         // provenance of perf weights
  LinearModel linear;
  SvrModel svr;
  GbtModel gbt;
};

// ---------------------------------------------------------------------------
// Linear ensemble: ordinary least squares with a tiny ridge for conditioning

namespace detail {

// Solves A x = b for symmetric positive definite A via Cholesky.
inline std::vector<double> solve_spd(std::vector<std::vector<double>> a,
                                     std::vector<double> b) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> l(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = a[i][j];
      for (std::size_t k = 0; k < j; ++k) sum -= l[i][k] * l[j][k];
      if (i == j) {
        if (sum <= 0 || !std::isfinite(sum))
          throw ValidationError(
              "linear solve: matrix not positive definite (rank-deficient "
              "features beyond ridge rescue)");
        l[i][i] = std::sqrt(sum);
      } else {
        l[i][j] = sum / l[j][j];
      }
    }
  }
  // Forward then backward substitution.
  std::vector<double> y(n), x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = b[i];
    for (std::size_t k = 0; k < i; ++k) sum -= l[i][k] * y[k];
    y[i] = sum / l[i][i];
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double sum = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) sum -= l[k][ii] * x[k];
    x[ii] = sum / l[ii][ii];
  }
  for (const double v : x)
    if (!std::isfinite(v))
      throw ValidationError("linear solve: non-finite solution");
  return x;
}

}  // namespace detail

inline EnsembleModel fit_linear(const FeatureMatrix& x,
                                const std::vector<double>& y,
                                double ridge = 1e-8) {
  const std::size_t n = x.n_rows();
  const std::size_t d = x.n_cols();
  if (n != y.size())
    throw ValidationError("fit_linear: row/target count mismatch");
  if (d == 0 || n <= d)
    throw ValidationError("fit_linear: need more rows than feature columns");

  // Normal equations over the design [1 | X].
  const std::size_t m = d + 1;
  std::vector<std::vector<double>> a(m, std::vector<double>(m, 0.0));
  std::vector<double> b(m, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<double> row(m);
    row[0] = 1.0;
    for (std::size_t c = 0; c < d; ++c) row[c + 1] = x.rows[r][c];
    for (std::size_t i = 0; i < m; ++i) {
      b[i] += row[i] * y[r];
      for (std::size_t j = 0; j < m; ++j) a[i][j] += row[i] * row[j];
    }
  }
  for (std::size_t i = 0; i < m; ++i) a[i][i] += ridge;

  const std::vector<double> beta = detail::solve_spd(std::move(a), std::move(b));
  EnsembleModel model;
  model.kind = EnsembleKind::kLinear;
  model.column_ids = x.column_ids;
  model.linear.intercept = beta[0];
  model.linear.coefficients.assign(beta.begin() + 1, beta.end());
  return model;
}

// ---------------------------------------------------------------------------
// Epsilon-SVR via sequential minimal optimization

namespace detail {

struct Standardization {
  std::vector<double> mean;
  std::vector<double> std;
};

inline Standardization column_stats(const std::vector<std::vector<double>>& rows,
                                    std::size_t d) {
  Standardization s;
  s.mean.assign(d, 0.0);
  s.std.assign(d, 0.0);
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (std::size_t c = 0; c < d; ++c) s.mean[c] += r[c];
  for (std::size_t c = 0; c < d; ++c) s.mean[c] /= n;
  for (const auto& r : rows)
    for (std::size_t c = 0; c < d; ++c) {
      const double dlt = r[c] - s.mean[c];
      s.std[c] += dlt * dlt;
    }
  for (std::size_t c = 0; c < d; ++c) {
    s.std[c] = std::sqrt(s.std[c] / n);
    if (s.std[c] < 1e-12) s.std[c] = 1.0;  // constant column: leave centered
  }
  return s;
}

inline std::vector<double> standardize_row(const std::vector<double>& row,
                                           const Standardization& s) {
  std::vector<double> out(row.size());
  for (std::size_t c = 0; c < row.size(); ++c)
    out[c] = (row[c] - s.mean[c]) / s.std[c];
  return out;
}

inline double rbf_kernel(const std::vector<double>& a,
                         const std::vector<double>& b, double gamma) {
  double dist2 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    dist2 += d * d;
  }
  return std::exp(-gamma * dist2);
}

}  // namespace detail

// Trains epsilon-SVR on the dual problem over 2n variables
// (alpha; alpha*) with maximal-violating-pair working-set selection,
// stopping at KKT gap <= kkt_tol.
inline EnsembleModel fit_svr(const FeatureMatrix& x,
                             const std::vector<double>& y,
                             const SvrParams& params, double kkt_tol = 1e-3) {
  const std::size_t n = x.n_rows();
  const std::size_t d = x.n_cols();
  if (n != y.size()) throw ValidationError("fit_svr: row/target mismatch");
  if (n < 2 || d == 0) throw ValidationError("fit_svr: need >= 2 rows");
  if (params.C <= 0 || params.epsilon <= 0 || params.gamma <= 0)
    throw ValidationError("fit_svr: C, epsilon, gamma must be positive");

  const auto stats = detail::column_stats(x.rows, d);
  std::vector<std::vector<double>> xs(n);
  for (std::size_t i = 0; i < n; ++i)
    xs[i] = detail::standardize_row(x.rows[i], stats);

  // Precomputed RBF kernel over training points.
  std::vector<double> kmat(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    kmat[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = detail::rbf_kernel(xs[i], xs[j], params.gamma);
      kmat[i * n + j] = v;
      kmat[j * n + i] = v;
    }
  }

  const std::size_t m = 2 * n;
  const double c_box = params.C;
  // Variable layout: [0,n) = alpha (sign +1), [n,2n) = alpha* (sign -1).
  auto sign_of = [n](std::size_t i) { return i < n ? 1.0 : -1.0; };
  auto point_of = [n](std::size_t i) { return i < n ? i : i - n; };
  std::vector<double> a(m, 0.0), grad(m);
  for (std::size_t i = 0; i < n; ++i) {
    grad[i] = params.epsilon - y[i];
    grad[n + i] = params.epsilon + y[i];
  }

  const std::size_t max_iter = std::max<std::size_t>(200000, 100 * m);
  constexpr double kTau = 1e-12;
  std::size_t iter = 0;
  for (;; ++iter) {
    // Maximal violating pair.
    double up_best = -std::numeric_limits<double>::infinity();
    double low_best = std::numeric_limits<double>::infinity();
    std::size_t up_idx = m, low_idx = m;
    for (std::size_t t = 0; t < m; ++t) {
      const double s = sign_of(t);
      const double v = -s * grad[t];
      const bool in_up = (s > 0 && a[t] < c_box) || (s < 0 && a[t] > 0);
      const bool in_low = (s > 0 && a[t] > 0) || (s < 0 && a[t] < c_box);
      if (in_up && v > up_best) {
        up_best = v;
        up_idx = t;
      }
      if (in_low && v < low_best) {
        low_best = v;
        low_idx = t;
      }
    }
    if (up_idx == m || low_idx == m || up_best - low_best <= kkt_tol) break;
    if (iter >= max_iter)
      throw ValidationError(
          "fit_svr: SMO did not converge within " + std::to_string(max_iter) +
          " iterations (KKT gap " + format_real(up_best - low_best) +
          ", C=" + format_real(params.C) +
          ", gamma=" + format_real(params.gamma) + ")");

    const std::size_t i = up_idx, j = low_idx;
    const double si = sign_of(i), sj = sign_of(j);
    const std::size_t pi = point_of(i), pj = point_of(j);
    const double kij = kmat[pi * n + pj];
    const double old_ai = a[i], old_aj = a[j];

    if (si != sj) {
      double quad = 2.0 + 2.0 * (si * sj) * kij;  // Qii + Qjj + 2Qij
      if (quad <= 0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = a[i] - a[j];
      a[i] += delta;
      a[j] += delta;
      if (diff > 0) {
        if (a[j] < 0) {
          a[j] = 0;
          a[i] = diff;
        }
      } else {
        if (a[i] < 0) {
          a[i] = 0;
          a[j] = -diff;
        }
      }
      if (diff > 0) {
        if (a[i] > c_box) {
          a[i] = c_box;
          a[j] = c_box - diff;
        }
      } else {
        if (a[j] > c_box) {
          a[j] = c_box;
          a[i] = c_box + diff;
        }
      }
    } else {
      double quad = 2.0 - 2.0 * (si * sj) * kij;  // Qii + Qjj - 2Qij
      if (quad <= 0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = a[i] + a[j];
      a[i] -= delta;
      a[j] += delta;
      if (sum > c_box) {
        if (a[i] > c_box) {
          a[i] = c_box;
          a[j] = sum - c_box;
        }
      } else {
        if (a[j] < 0) {
          a[j] = 0;
          a[i] = sum;
        }
      }
      if (sum > c_box) {
        if (a[j] > c_box) {
          a[j] = c_box;
          a[i] = sum - c_box;
        }
      } else {
        if (a[i] < 0) {
          a[i] = 0;
          a[j] = sum;
        }
      }
    }

    const double dai = a[i] - old_ai;
    const double daj = a[j] - old_aj;
    if (dai == 0 && daj == 0) continue;
    for (std::size_t t = 0; t < m; ++t) {
      const double st = sign_of(t);
      const std::size_t pt = point_of(t);
      grad[t] += st * si * kmat[pt * n + pi] * dai +
                 st * sj * kmat[pt * n + pj] * daj;
    }
  }

  // Bias from the KKT conditions (mean over free variables, else midpoint).
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0;
  std::size_t free_count = 0;
  for (std::size_t t = 0; t < m; ++t) {
    const double s = sign_of(t);
    const double yg = s * grad[t];
    if (a[t] >= c_box) {
      if (s < 0)
        ub = std::min(ub, yg);
      else
        lb = std::max(lb, yg);
    } else if (a[t] <= 0) {
      if (s > 0)
        ub = std::min(ub, yg);
      else
        lb = std::max(lb, yg);
    } else {
      free_sum += yg;
      free_count++;
    }
  }
  const double rho = free_count > 0 ? free_sum / static_cast<double>(free_count)
                                    : (ub + lb) / 2.0;

  EnsembleModel model;
  model.kind = EnsembleKind::kSvr;
  model.column_ids = x.column_ids;
  model.svr.params = params;
  model.svr.feature_mean = stats.mean;
  model.svr.feature_std = stats.std;
  model.svr.bias = -rho;
  model.svr.iterations = iter;
  for (std::size_t i = 0; i < n; ++i) {
    const double coef = a[i] - a[n + i];
    if (std::abs(coef) < 1e-12) continue;
    model.svr.support_vectors.push_back(xs[i]);
    model.svr.coefficients.push_back(coef);
  }
  return model;
}

inline double svr_predict_one(const SvrModel& model,
                              const std::vector<double>& raw_row) {
  if (raw_row.size() != model.feature_mean.size())
    throw ValidationError("svr_predict_one: feature dimension mismatch");
  detail::Standardization s{model.feature_mean, model.feature_std};
  const std::vector<double> x = detail::standardize_row(raw_row, s);
  double acc = model.bias;
  for (std::size_t i = 0; i < model.support_vectors.size(); ++i)
    acc += model.coefficients[i] *
           detail::rbf_kernel(model.support_vectors[i], x, model.params.gamma);
  return acc;
}

// ---------------------------------------------------------------------------
// Gradient-boosted regression trees (least squares)

namespace detail {

struct TreeBuilder {
  const std::vector<std::vector<double>>& rows;
  const std::vector<double>& residuals;
  const GbtParams& params;
  GbtTree tree;

  int build(std::vector<std::size_t> idx, std::size_t depth) {
    GbtNode node;
    double sum = 0;
    for (const std::size_t i : idx) sum += residuals[i];
    node.value = sum / static_cast<double>(idx.size());

    if (depth < params.depth && idx.size() >= 2 * params.min_leaf) {
      // Exhaustive split search; gain is the increase of
      // sum_L^2/n_L + sum_R^2/n_R over the unsplit node (equivalent to SSE
      // reduction). Ties keep the earliest (feature, threshold) candidate.
      const std::size_t d = rows[0].size();
      double best_gain = 1e-12;
      int best_feature = -1;
      double best_threshold = 0;
      const double parent = sum * sum / static_cast<double>(idx.size());
      for (std::size_t f = 0; f < d; ++f) {
        std::vector<std::pair<double, double>> vals;  // (feature, residual)
        vals.reserve(idx.size());
        for (const std::size_t i : idx) vals.push_back({rows[i][f], residuals[i]});
        std::sort(vals.begin(), vals.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        double left_sum = 0;
        for (std::size_t t = 0; t + 1 < vals.size(); ++t) {
          left_sum += vals[t].second;
          if (vals[t].first == vals[t + 1].first) continue;
          const std::size_t nl = t + 1, nr = vals.size() - nl;
          if (nl < params.min_leaf || nr < params.min_leaf) continue;
          const double right_sum = sum - left_sum;
          const double gain = left_sum * left_sum / static_cast<double>(nl) +
                              right_sum * right_sum / static_cast<double>(nr) -
                              parent;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = static_cast<int>(f);
            best_threshold = (vals[t].first + vals[t + 1].first) / 2.0;
          }
        }
      }
      if (best_feature >= 0) {
        std::vector<std::size_t> left, right;
        for (const std::size_t i : idx)
          (rows[i][static_cast<std::size_t>(best_feature)] <= best_threshold
               ? left
               : right)
              .push_back(i);
        node.feature = best_feature;
        node.threshold = best_threshold;
        const int self = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(node);
        const int l = build(std::move(left), depth + 1);
        const int r = build(std::move(right), depth + 1);
        tree.nodes[static_cast<std::size_t>(self)].left = l;
        tree.nodes[static_cast<std::size_t>(self)].right = r;
        return self;
      }
    }
    tree.nodes.push_back(node);
    return static_cast<int>(tree.nodes.size() - 1);
  }
};

}  // namespace detail

// Fits a boosted ensemble at one fixed hyperparameter point.
inline EnsembleModel fit_gbt_point(const FeatureMatrix& x,
                                   const std::vector<double>& y,
                                   const GbtParams& params) {
  const std::size_t n = x.n_rows();
  if (n != y.size()) throw ValidationError("fit_gbt: row/target mismatch");
  if (n == 0 || x.n_cols() == 0) throw ValidationError("fit_gbt: empty matrix");
  if (params.trees < 1 || params.learning_rate <= 0 || params.min_leaf < 1)
    throw ValidationError("fit_gbt: bad hyperparameters");

  EnsembleModel model;
  model.kind = EnsembleKind::kGbt;
  model.column_ids = x.column_ids;
  model.gbt.params = params;
  model.gbt.base = std::accumulate(y.begin(), y.end(), 0.0) /
                   static_cast<double>(n);

  std::vector<double> f(n, model.gbt.base);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::vector<double> residuals(n);
  for (std::size_t t = 0; t < params.trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) residuals[i] = y[i] - f[i];
    detail::TreeBuilder builder{x.rows, residuals, params, {}};
    builder.build(all, 0);
    GbtTree tree = std::move(builder.tree);
    for (std::size_t i = 0; i < n; ++i)
      f[i] += params.learning_rate * tree.predict(x.rows[i]);
    model.gbt.trees.push_back(std::move(tree));
  }
  return model;
}

inline double gbt_predict_one(const GbtModel& model,
                              const std::vector<double>& row) {
  double acc = model.base;
  for (const auto& tree : model.trees)
    acc += model.params.learning_rate * tree.predict(row);
  return acc;
}

// ---------------------------------------------------------------------------
// Prediction over a feature matrix

// Real-valued predictions, clamped to [1,5]. Voting is inherently discrete;
// averaging and the stacked regressors keep fractional values so downstream
// rank metrics see full fidelity. Round only when a submission-format
// integer is required.
inline std::vector<double> predict_real(const EnsembleModel& model,
                                        const FeatureMatrix& x) {
  if (!model.column_ids.empty() && !x.column_ids.empty() &&
      model.column_ids != x.column_ids)
    throw ValidationError(
        "predict_real: feature columns do not match the fitted model");
  std::vector<double> out;
  out.reserve(x.n_rows());
  for (const auto& row : x.rows) {
    double value = 0;
    switch (model.kind) {
      case EnsembleKind::kMajorityVote: {
        std::vector<int> scores;
        scores.reserve(row.size());
        for (const double v : row) scores.push_back(round_score(v));
        value = majority_vote(scores);
        break;
      }
      case EnsembleKind::kEqualWeight:
      case EnsembleKind::kPerfWeight: {
        const std::vector<double> w = model.weights.empty()
                                          ? equal_weights(row.size())
                                          : model.weights;
        if (w.size() != row.size())
          throw ValidationError("predict_real: weight arity mismatch");
        value = std::inner_product(row.begin(), row.end(), w.begin(), 0.0);
        break;
      }
      case EnsembleKind::kLinear: {
        if (model.linear.coefficients.size() != row.size())
          throw ValidationError("predict_real: coefficient arity mismatch");
        value = model.linear.intercept +
                std::inner_product(row.begin(), row.end(),
                                   model.linear.coefficients.begin(), 0.0);
        break;
      }
      case EnsembleKind::kSvr:
        value = svr_predict_one(model.svr, row);
        break;
      case EnsembleKind::kGbt:
        value = gbt_predict_one(model.gbt, row);
        break;
    }
    out.push_back(clamp_score(value));
  }
  return out;
}

inline std::vector<int> predict_rounded(const EnsembleModel& model,
                                        const FeatureMatrix& x) {
  std::vector<int> out;
  for (const double v : predict_real(model, x)) out.push_back(round_score(v));
  return out;
}

// ---------------------------------------------------------------------------
// K-fold cross-validation

// Trains on the k-1 remaining folds and returns predictions for the held-out
// rows.
using CvLearner = std::function<std::vector<double>(
    const FeatureMatrix& train_x, const std::vector<double>& train_y,
    const FeatureMatrix& test_x)>;

struct CvFold {
  double spearman = 0.0;
  bool degenerate = false;
  double acc_within_sd = 0.0;
  std::size_t size = 0;
};

struct CvResult {
  std::vector<CvFold> folds;
  double mean_spearman = 0.0;
  double mean_acc_within_sd = 0.0;
};

namespace detail {

// Deterministic Fisher-Yates permutation; not std::shuffle, whose draws are
// implementation-defined and would make fold assignment platform-dependent.
inline std::vector<std::size_t> shuffled_indices(std::size_t n,
                                                 std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i)
    std::swap(idx[i - 1], idx[rng() % i]);
  return idx;
}

// First n%k folds take the extra row.
inline std::vector<std::vector<std::size_t>> fold_assignment(
    std::size_t n, std::size_t k, std::uint64_t seed) {
  const std::vector<std::size_t> idx = shuffled_indices(n, seed);
  std::vector<std::vector<std::size_t>> folds(k);
  const std::size_t base = n / k, extra = n % k;
  std::size_t at = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    folds[f].assign(idx.begin() + static_cast<std::ptrdiff_t>(at),
                    idx.begin() + static_cast<std::ptrdiff_t>(at + size));
    at += size;
  }
  return folds;
}

inline FeatureMatrix take_rows(const FeatureMatrix& x,
                               const std::vector<std::size_t>& idx) {
  FeatureMatrix out;
  out.column_ids = x.column_ids;
  for (const std::size_t i : idx) {
    out.rows.push_back(x.rows[i]);
    if (i < x.row_ids.size()) out.row_ids.push_back(x.row_ids[i]);
  }
  return out;
}

template <typename T>
std::vector<T> take(const std::vector<T>& v,
                    const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (const std::size_t i : idx) out.push_back(v[i]);
  return out;
}

}  // namespace detail

// y carries the gold means; stds the matching standard deviations (for
// accuracy-within-SD on the held-out fold).
inline CvResult kfold_cv(const CvLearner& learner, const FeatureMatrix& x,
                         const std::vector<double>& y,
                         const std::vector<double>& stds, std::size_t k,
                         std::uint64_t seed) {
  const std::size_t n = x.n_rows();
  if (k < 2) throw ValidationError("kfold_cv: k must be >= 2");
  if (n < k) throw ValidationError("kfold_cv: fewer rows than folds");
  if (y.size() != n || stds.size() != n)
    throw ValidationError("kfold_cv: target/std size mismatch");

  const auto folds = detail::fold_assignment(n, k, seed);
  CvResult result;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> train_idx;
    for (std::size_t g = 0; g < k; ++g)
      if (g != f)
        train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
    std::sort(train_idx.begin(), train_idx.end());
    std::vector<std::size_t> test_idx = folds[f];
    std::sort(test_idx.begin(), test_idx.end());

    std::vector<double> preds;
    try {
      preds = learner(detail::take_rows(x, train_idx),
                      detail::take(y, train_idx),
                      detail::take_rows(x, test_idx));
    } catch (const std::exception& e) {
      throw ValidationError("kfold_cv: learner failed on fold " +
                            std::to_string(f) + ": " + e.what());
    }
    if (preds.size() != test_idx.size())
      throw ValidationError("kfold_cv: learner returned wrong count on fold " +
                            std::to_string(f));

    const std::vector<double> gold = detail::take(y, test_idx);
    const std::vector<double> sd = detail::take(stds, test_idx);
    CvFold fold;
    fold.size = test_idx.size();
    const SpearmanResult sp = spearman_full(preds, gold);
    fold.spearman = sp.rho;
    fold.degenerate = sp.degenerate;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (std::abs(preds[i] - gold[i]) <= sd[i]) hits++;
    fold.acc_within_sd = static_cast<double>(hits) /
                         static_cast<double>(preds.size());
    result.folds.push_back(fold);
  }
  for (const auto& fold : result.folds) {
    result.mean_spearman += fold.spearman;
    result.mean_acc_within_sd += fold.acc_within_sd;
  }
  result.mean_spearman /= static_cast<double>(k);
  result.mean_acc_within_sd /= static_cast<double>(k);
  return result;
}

namespace detail {

// Mean held-out Spearman for internal grid selection (no stds required).
inline double cv_mean_spearman(const CvLearner& learner,
                               const FeatureMatrix& x,
                               const std::vector<double>& y, std::size_t k,
                               std::uint64_t seed) {
  const std::vector<double> zeros(y.size(), 0.0);
  return kfold_cv(learner, x, y, zeros, k, seed).mean_spearman;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Grid selection

struct GbtGrid {
  std::vector<std::size_t> trees = {50, 200};
  std::vector<std::size_t> depth = {2, 3};
  std::vector<double> learning_rate = {0.05, 0.1};
  std::vector<std::size_t> min_leaf = {5};
};

struct SvrGrid {
  std::vector<double> C = {0.1, 1.0, 10.0};
  std::vector<double> epsilon = {0.05, 0.1, 0.2};
  // Empty means {0.1, 0.5, 1/d} resolved against the feature count.
  std::vector<double> gamma = {};
};

// Grid point chosen by mean k-fold CV Spearman; ties keep the earliest grid
// point in nested listing order; the winner is refit on all rows.
inline EnsembleModel fit_gbt(const FeatureMatrix& x,
                             const std::vector<double>& y,
                             const GbtGrid& grid = {}, std::size_t cv_k = 5,
                             std::uint64_t seed = 0) {
  if (grid.trees.empty() || grid.depth.empty() || grid.learning_rate.empty() ||
      grid.min_leaf.empty())
    throw ValidationError("fit_gbt: empty hyperparameter grid");

  std::vector<GbtParams> points;
  for (const std::size_t t : grid.trees)
    for (const std::size_t d : grid.depth)
      for (const double lr : grid.learning_rate)
        for (const std::size_t ml : grid.min_leaf)
          points.push_back({t, d, lr, ml});

  GbtParams best = points.front();
  if (points.size() > 1) {
    double best_score = -std::numeric_limits<double>::infinity();
    for (const auto& p : points) {
      const CvLearner learner = [&p](const FeatureMatrix& tx,
                                     const std::vector<double>& ty,
                                     const FeatureMatrix& ex) {
        const EnsembleModel m = fit_gbt_point(tx, ty, p);
        return predict_real(m, ex);
      };
      const double score = detail::cv_mean_spearman(learner, x, y, cv_k, seed);
      if (score > best_score) {
        best_score = score;
        best = p;
      }
    }
  }
  return fit_gbt_point(x, y, best);
}

inline EnsembleModel fit_svr_grid(const FeatureMatrix& x,
                                  const std::vector<double>& y,
                                  const SvrGrid& grid = {}, std::size_t cv_k = 5,
                                  std::uint64_t seed = 0,
                                  double kkt_tol = 1e-3) {
  if (grid.C.empty() || grid.epsilon.empty())
    throw ValidationError("fit_svr_grid: empty hyperparameter grid");
  std::vector<double> gammas = grid.gamma;
  if (gammas.empty())
    gammas = {0.1, 0.5, 1.0 / static_cast<double>(std::max<std::size_t>(
                             x.n_cols(), 1))};

  std::vector<SvrParams> points;
  for (const double c : grid.C)
    for (const double e : grid.epsilon)
      for (const double g : gammas) points.push_back({c, e, g});

  SvrParams best = points.front();
  if (points.size() > 1) {
    double best_score = -std::numeric_limits<double>::infinity();
    for (const auto& p : points) {
      const CvLearner learner = [&p, kkt_tol](const FeatureMatrix& tx,
                                              const std::vector<double>& ty,
                                              const FeatureMatrix& ex) {
        const EnsembleModel m = fit_svr(tx, ty, p, kkt_tol);
        return predict_real(m, ex);
      };
      const double score = detail::cv_mean_spearman(learner, x, y, cv_k, seed);
      if (score > best_score) {
        best_score = score;
        best = p;
      }
    }
  }
  return fit_svr(x, y, best, kkt_tol);
}

// ---------------------------------------------------------------------------
// Model persistence (all parameters explicit)

inline json ensemble_model_to_json(const EnsembleModel& model) {
  json j;
  j["kind"] = ensemble_kind_name(model.kind);
  j["column_ids"] = model.column_ids;
  switch (model.kind) {
    case EnsembleKind::kMajorityVote:
      break;
    case EnsembleKind::kEqualWeight:
    case EnsembleKind::kPerfWeight:
      j["weights"] = model.weights;
      if (!model.weight_metric.empty()) j["weight_metric"] = model.weight_metric;
      break;
    case EnsembleKind::kLinear:
      j["intercept"] = model.linear.intercept;
      j["coefficients"] = model.linear.coefficients;
      break;
    case EnsembleKind::kSvr: {
      j["C"] = model.svr.params.C;
      j["epsilon"] = model.svr.params.epsilon;
      j["gamma"] = model.svr.params.gamma;
      j["feature_mean"] = model.svr.feature_mean;
      j["feature_std"] = model.svr.feature_std;
      j["support_vectors"] = model.svr.support_vectors;
      j["coefficients"] = model.svr.coefficients;
      j["bias"] = model.svr.bias;
      break;
    }
    case EnsembleKind::kGbt: {
      j["trees_count"] = model.gbt.params.trees;
      j["depth"] = model.gbt.params.depth;
      j["learning_rate"] = model.gbt.params.learning_rate;
      j["min_leaf"] = model.gbt.params.min_leaf;
      j["base"] = model.gbt.base;
      json trees = json::array();
      for (const auto& tree : model.gbt.trees) {
        json nodes = json::array();
        for (const auto& node : tree.nodes)
          nodes.push_back({{"feature", node.feature},
                           {"threshold", node.threshold},
                           {"left", node.left},
                           {"right", node.right},
                           {"value", node.value}});
        trees.push_back(std::move(nodes));
      }
      j["trees"] = std::move(trees);
      break;
    }
  }
  return j;
}

inline EnsembleModel ensemble_model_from_json(const json& j) {
  EnsembleModel model;
  try {
    model.kind = ensemble_kind_from_name(j.at("kind").get<std::string>());
    model.column_ids =
        j.value("column_ids", std::vector<std::string>{});
    switch (model.kind) {
      case EnsembleKind::kMajorityVote:
        break;
      case EnsembleKind::kEqualWeight:
      case EnsembleKind::kPerfWeight:
        model.weights = j.at("weights").get<std::vector<double>>();
        model.weight_metric = j.value("weight_metric", "");
        break;
      case EnsembleKind::kLinear:
        model.linear.intercept = j.at("intercept").get<double>();
        model.linear.coefficients =
            j.at("coefficients").get<std::vector<double>>();
        break;
      case EnsembleKind::kSvr:
        model.svr.params.C = j.at("C").get<double>();
        model.svr.params.epsilon = j.at("epsilon").get<double>();
        model.svr.params.gamma = j.at("gamma").get<double>();
        model.svr.feature_mean = j.at("feature_mean").get<std::vector<double>>();
        model.svr.feature_std = j.at("feature_std").get<std::vector<double>>();
        model.svr.support_vectors =
            j.at("support_vectors").get<std::vector<std::vector<double>>>();
        model.svr.coefficients =
            j.at("coefficients").get<std::vector<double>>();
        model.svr.bias = j.at("bias").get<double>();
        break;
      case EnsembleKind::kGbt: {
        model.gbt.params.trees = j.at("trees_count").get<std::size_t>();
        model.gbt.params.depth = j.at("depth").get<std::size_t>();
        model.gbt.params.learning_rate = j.at("learning_rate").get<double>();
        model.gbt.params.min_leaf = j.at("min_leaf").get<std::size_t>();
        model.gbt.base = j.at("base").get<double>();
        for (const auto& tj : j.at("trees")) {
          GbtTree tree;
          for (const auto& nj : tj) {
            GbtNode node;
            node.feature = nj.at("feature").get<int>();
            node.threshold = nj.at("threshold").get<double>();
            node.left = nj.at("left").get<int>();
            node.right = nj.at("right").get<int>();
            node.value = nj.at("value").get<double>();
            tree.nodes.push_back(node);
          }
          model.gbt.trees.push_back(std::move(tree));
        }
        break;
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("ensemble model JSON: ") + e.what());
  }
  return model;
}

}  // namespace ambiscore
