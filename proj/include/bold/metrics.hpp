#pragma once

// Performance and positional-bias metrics over a prediction set. Every option
// position is treated as a class. Percent-valued outputs are scaled by 100
// and never rounded here.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "bold/core.hpp"

namespace bold {

using GoldMap = std::unordered_map<std::string, std::size_t>;

/// How abstentions enter the accuracy denominator.
enum class AbstentionPolicy {
  CountIncorrect,  ///< abstentions stay in the denominator (default)
  Exclude,         ///< accuracy over answered records only
};

struct MetricOptions {
  AbstentionPolicy abstentions = AbstentionPolicy::CountIncorrect;
};

/// Raw per-option tallies underlying all other metrics.
struct OptionTally {
  std::size_t n_options = 0;
  std::vector<std::size_t> predicted;  ///< answered records voting for option i
  std::vector<std::size_t> gold;       ///< records (answered or not) whose gold is i
  std::vector<std::size_t> hits;       ///< answered records voting correctly for i
  std::size_t abstained = 0;
  std::size_t total = 0;

  std::size_t answered() const { return total - abstained; }
  std::size_t correct() const {
    std::size_t c = 0;
    for (auto h : hits) c += h;
    return c;
  }
};

inline OptionTally tally(std::span<const PredictionRecord> preds, const GoldMap& gold,
                         std::size_t n_options) {
  if (n_options < 2) throw Error(ErrorCode::InvalidInput, "metrics need at least two options");
  OptionTally t;
  t.n_options = n_options;
  t.predicted.assign(n_options, 0);
  t.gold.assign(n_options, 0);
  t.hits.assign(n_options, 0);
  std::string missing;
  std::size_t n_missing = 0;
  for (const auto& rec : preds) {
    auto it = gold.find(rec.task_id);
    if (it == gold.end()) {
      if (n_missing++ < 50) missing += (missing.empty() ? "" : ", ") + rec.task_id;
      continue;
    }
    if (rec.probs && rec.probs->size() != n_options) {
      throw Error(ErrorCode::InconsistentArity,
                  "record " + rec.task_id + " has " + std::to_string(rec.probs->size()) +
                      " probabilities, expected " + std::to_string(n_options));
    }
    const std::size_t g = it->second;
    if (g >= n_options) throw Error(ErrorCode::InconsistentArity, "gold index out of range for " + rec.task_id);
    ++t.total;
    ++t.gold[g];
    const auto choice = rec.chosen();
    if (!choice) {
      ++t.abstained;
      continue;
    }
    if (*choice >= n_options) {
      throw Error(ErrorCode::InconsistentArity, "record " + rec.task_id + " choice out of range");
    }
    ++t.predicted[*choice];
    if (*choice == g) ++t.hits[g];
  }
  if (n_missing > 0) {
    throw Error(ErrorCode::MissingGold, std::to_string(n_missing) + " record(s) without gold: " + missing +
                                            (n_missing > 50 ? ", ..." : ""));
  }
  return t;
}

inline double accuracy(const OptionTally& t, AbstentionPolicy policy = AbstentionPolicy::CountIncorrect) {
  const std::size_t denom = policy == AbstentionPolicy::Exclude ? t.answered() : t.total;
  if (denom == 0) throw Error(ErrorCode::InvalidInput, "accuracy of an empty prediction set");
  return 100.0 * static_cast<double>(t.correct()) / static_cast<double>(denom);
}

inline double accuracy(std::span<const PredictionRecord> preds, const GoldMap& gold, std::size_t n_options,
                       AbstentionPolicy policy = AbstentionPolicy::CountIncorrect) {
  return accuracy(tally(preds, gold, n_options), policy);
}

struct PerOptionScores {
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
};

inline PerOptionScores per_option_prf(const OptionTally& t) {
  PerOptionScores s;
  s.precision.resize(t.n_options);
  s.recall.resize(t.n_options);
  s.f1.resize(t.n_options);
  for (std::size_t i = 0; i < t.n_options; ++i) {
    const double tp = static_cast<double>(t.hits[i]);
    const double p = t.predicted[i] ? tp / static_cast<double>(t.predicted[i]) : 0.0;
    const double r = t.gold[i] ? tp / static_cast<double>(t.gold[i]) : 0.0;
    s.precision[i] = p;
    s.recall[i] = r;
    s.f1[i] = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  return s;
}

inline PerOptionScores per_option_prf(std::span<const PredictionRecord> preds, const GoldMap& gold,
                                      std::size_t n_options) {
  return per_option_prf(tally(preds, gold, n_options));
}

/// Population standard deviation (divisor n).
inline double std_across_options(std::span<const double> values) {
  if (values.size() < 2) throw Error(ErrorCode::InvalidInput, "std across options needs >= 2 values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

/// Jensen-Shannon distance with base-2 logs, in [0, 1].
inline double js_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error(ErrorCode::InvalidInput, "js_distance on vectors of different length");
  double div = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    const double a = p[i] > 0.0 ? p[i] * std::log2(p[i] / m) : 0.0;
    const double b = q[i] > 0.0 ? q[i] * std::log2(q[i] / m) : 0.0;
    div += 0.5 * (a + b);  // a + b commutes exactly, so js(p,q) == js(q,p) bitwise
  }
  return std::sqrt(std::clamp(div, 0.0, 1.0));
}

inline double js_distance(const Distribution& p, const Distribution& q) {
  return js_distance(p.values(), q.values());
}

/// One-vs-rest JS distance per option between the predicted-rate and gold-rate
/// binary marginals.
inline std::vector<double> per_option_js(const OptionTally& t) {
  std::vector<double> out(t.n_options, 0.0);
  const double answered = static_cast<double>(t.answered());
  const double total = static_cast<double>(t.total);
  for (std::size_t i = 0; i < t.n_options; ++i) {
    const double pr = answered > 0 ? static_cast<double>(t.predicted[i]) / answered : 0.0;
    const double gr = total > 0 ? static_cast<double>(t.gold[i]) / total : 0.0;
    const double p[2] = {pr, 1.0 - pr};
    const double q[2] = {gr, 1.0 - gr};
    out[i] = js_distance(p, q);
  }
  return out;
}

inline double js_std(const OptionTally& t) {
  const auto d = per_option_js(t);
  return 100.0 * std_across_options(d);
}

inline double js_std(std::span<const PredictionRecord> preds, const GoldMap& gold, std::size_t n_options) {
  return js_std(tally(preds, gold, n_options));
}

inline double recall_std(const OptionTally& t) { return 100.0 * std_across_options(per_option_prf(t).recall); }

inline double recall_std(std::span<const PredictionRecord> preds, const GoldMap& gold, std::size_t n_options) {
  return recall_std(tally(preds, gold, n_options));
}

struct BiasReport {
  double accuracy = 0.0;
  double f1_mean = 0.0;
  double recall_std = 0.0;
  double f1_std = 0.0;
  double js_std = 0.0;
  std::vector<std::size_t> per_option_counts;
  std::vector<double> per_option_recall;
  std::vector<double> per_option_f1;
  std::size_t abstained = 0;
  std::size_t records = 0;
  std::size_t correct = 0;

  friend bool operator==(const BiasReport&, const BiasReport&) = default;
};

inline BiasReport bias_report(const OptionTally& t, const MetricOptions& options = {}) {
  const auto scores = per_option_prf(t);
  BiasReport r;
  r.accuracy = accuracy(t, options.abstentions);
  double f1_sum = 0.0;
  for (double f : scores.f1) f1_sum += f;
  r.f1_mean = 100.0 * f1_sum / static_cast<double>(t.n_options);
  r.recall_std = 100.0 * std_across_options(scores.recall);
  r.f1_std = 100.0 * std_across_options(scores.f1);
  r.js_std = js_std(t);
  r.per_option_counts = t.predicted;
  r.per_option_recall = scores.recall;
  r.per_option_f1 = scores.f1;
  r.abstained = t.abstained;
  r.records = t.total;
  r.correct = t.correct();
  return r;
}

inline BiasReport bias_report(std::span<const PredictionRecord> preds, const GoldMap& gold,
                              std::size_t n_options, const MetricOptions& options = {}) {
  return bias_report(tally(preds, gold, n_options), options);
}

/// Relative change 100*(new-old)/old; nullopt when old is zero.
inline std::optional<double> percent_delta(double updated, double baseline) {
  if (baseline == 0.0) return std::nullopt;
  return 100.0 * (updated - baseline) / baseline;
}

}  // namespace bold
