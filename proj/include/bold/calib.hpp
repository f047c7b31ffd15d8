#pragma once

// Prior estimation from ill-defined decompositions and log-space debiasing.
//
// Under a decomposition attack the content-driven factor of the observed
// distribution is uniform, so the attacked observation is the positional
// prior itself. A sample prior is softmax of the (weighted) sum of the three
// attacked priors; the global prior is the mean of sample priors over an
// estimation budget of K = round(k * |D|) tasks. Debiasing divides the prior
// out in log space and renormalizes with softmax.
//
// Note that softmax is applied to a sum of probabilities in [0, 3], which
// keeps every estimated prior fairly close to uniform (logit gap <= 3). A
// near-uniform estimate does not mean the model is unbiased.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bold/core.hpp"
#include "bold/rng.hpp"

namespace bold {

inline constexpr std::array<AttackTag, 3> kDecompositions = {AttackTag::VideoZero, AttackTag::QuestionZero,
                                                             AttackTag::OptionsZero};

/// Slot of a decomposition attack in weight vectors and observation arrays.
inline std::size_t decomposition_slot(AttackTag tag) {
  for (std::size_t i = 0; i < kDecompositions.size(); ++i) {
    if (kDecompositions[i] == tag) return i;
  }
  throw Error(ErrorCode::InvalidInput, "calibration only accepts video-zero, question-zero and options-zero");
}

using Weights = std::array<double, 3>;
inline constexpr Weights kUnitWeights = {1.0, 1.0, 1.0};

/// The three attacked observations of one task.
struct Decomposed {
  std::array<std::optional<Distribution>, 3> by_attack;

  void set(AttackTag tag, Distribution d) { by_attack[decomposition_slot(tag)] = std::move(d); }
  const std::optional<Distribution>& get(AttackTag tag) const { return by_attack[decomposition_slot(tag)]; }
  bool complete() const {
    return std::all_of(by_attack.begin(), by_attack.end(), [](const auto& d) { return d.has_value(); });
  }
};

using AttackedObservations = std::unordered_map<std::string, Decomposed>;

struct PriorEstimate {
  Distribution prior = Distribution::uniform(2);
  double k = 1.0;
  std::uint64_t seed = kDefaultSeed;
  Weights weights = kUnitWeights;
  std::vector<std::string> sample_ids;

  std::size_t n() const { return prior.size(); }
  friend bool operator==(const PriorEstimate&, const PriorEstimate&) = default;
};

/// Under an attack the observation is the prior.
inline const Distribution& attacked_prior(const Distribution& observed) { return observed; }

inline Distribution sample_prior(const Decomposed& attacked, const Weights& weights = kUnitWeights) {
  if (!attacked.complete()) {
    throw Error(ErrorCode::IncompleteDecomposition, "sample is missing an attacked observation");
  }
  const std::size_t n = attacked.by_attack[0]->size();
  std::vector<double> logits(n, 0.0);
  for (std::size_t j = 0; j < attacked.by_attack.size(); ++j) {
    const Distribution& prior = attacked_prior(*attacked.by_attack[j]);
    if (prior.size() != n) {
      throw Error(ErrorCode::InconsistentArity, "attacked observations of one sample differ in length");
    }
    for (std::size_t i = 0; i < n; ++i) logits[i] += weights[j] * prior[i];
  }
  return softmax(logits);
}

/// Arithmetic mean of distributions of equal length, renormalized.
inline Distribution mean_distribution(std::span<const Distribution> items) {
  if (items.empty()) throw Error(ErrorCode::EmptyBudget, "no distributions to average");
  const std::size_t n = items.front().size();
  std::vector<double> acc(n, 0.0);
  for (const auto& d : items) {
    if (d.size() != n) throw Error(ErrorCode::InconsistentArity, "cannot average priors of different length");
    for (std::size_t i = 0; i < n; ++i) acc[i] += d[i];
  }
  for (double& v : acc) v /= static_cast<double>(items.size());
  return normalize(acc);
}

inline std::size_t estimation_budget(std::size_t dataset_size, double k) {
  if (!(k > 0.0 && k <= 1.0)) throw Error(ErrorCode::InvalidInput, "k must lie in (0, 1]");
  return static_cast<std::size_t>(std::llround(k * static_cast<double>(dataset_size)));
}

/// K ids drawn without replacement. Each id is ranked by derive_seed(seed, id)
/// and the K lowest ranks are kept, which is a uniform draw that does not
/// depend on the order of `ids`.
inline std::vector<std::string> sample_estimation_set(std::span<const std::string> ids, double k,
                                                      std::uint64_t seed) {
  const std::size_t budget = estimation_budget(ids.size(), k);
  if (budget == 0) throw Error(ErrorCode::EmptyBudget, "estimation budget rounds to zero samples");
  std::vector<std::pair<std::uint64_t, std::string>> ranked;
  ranked.reserve(ids.size());
  for (const auto& id : ids) ranked.emplace_back(derive_seed(seed, id), id);
  std::sort(ranked.begin(), ranked.end());
  std::vector<std::string> out;
  out.reserve(budget);
  for (std::size_t i = 0; i < budget; ++i) out.push_back(std::move(ranked[i].second));
  return out;
}

/// Mean sample prior over `ids`.
inline Distribution prior_over(std::span<const std::string> ids, const AttackedObservations& attacked,
                               const Weights& weights = kUnitWeights) {
  std::vector<Distribution> priors;
  priors.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = attacked.find(id);
    if (it == attacked.end()) {
      throw Error(ErrorCode::IncompleteDecomposition, "no attacked observations for task " + id);
    }
    if (!it->second.complete()) {
      throw Error(ErrorCode::IncompleteDecomposition, "task " + id + " lacks an attacked observation");
    }
    priors.push_back(sample_prior(it->second, weights));
  }
  return mean_distribution(priors);
}

inline PriorEstimate estimate_global_prior(std::span<const std::string> dataset,
                                           const AttackedObservations& attacked, double k,
                                           std::uint64_t seed = kDefaultSeed,
                                           const Weights& weights = kUnitWeights) {
  auto sample = sample_estimation_set(dataset, k, seed);
  Distribution prior = prior_over(sample, attacked, weights);
  return PriorEstimate{std::move(prior), k, seed, weights, std::move(sample)};
}

/// softmax(log p_obs - log p_prior) with both logs floored.
inline Distribution debias(const Distribution& observed, const Distribution& prior) {
  if (observed.size() != prior.size()) {
    throw Error(ErrorCode::InvalidInput, "observed and prior distributions differ in length");
  }
  auto logit = safe_log(observed);
  const auto log_prior = safe_log(prior);
  for (std::size_t i = 0; i < logit.size(); ++i) logit[i] -= log_prior[i];
  return softmax(logit);
}

/// Debiases every record with one global prior; abstentions pass through.
inline std::vector<PredictionRecord> debias_dataset(std::span<const PredictionRecord> preds,
                                                    const Distribution& prior) {
  std::vector<PredictionRecord> out;
  out.reserve(preds.size());
  for (const auto& rec : preds) {
    if (rec.abstained) {
      out.push_back(rec);
      continue;
    }
    if (!rec.probs) {
      throw Error(ErrorCode::RequiresDistributions,
                  "record " + rec.task_id + " carries only a hard choice; debiasing needs probabilities");
    }
    PredictionRecord next = rec;
    next.probs = debias(*rec.probs, prior);
    next.choice = argmax_first(*next.probs);
    out.push_back(std::move(next));
  }
  return out;
}

inline std::vector<PredictionRecord> debias_dataset(std::span<const PredictionRecord> preds,
                                                    const PriorEstimate& estimate) {
  return debias_dataset(preds, estimate.prior);
}

}  // namespace bold
