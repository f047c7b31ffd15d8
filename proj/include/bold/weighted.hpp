#pragma once

// Weighted prior estimation: per-attack weights chosen by COBYLA inside a
// k-fold cross-validation over the estimation sample.
//
// For each fold the weights minimize recall_std of the debiased predictions
// on the fold's test part, with the prior built from that same test part.
// The complementary validation part is only monitored. The final prior is
// the average of the fold priors at their optimized weights, each fold
// weighted by its share of the sample (a plain mean when folds are equal).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "bold/calib.hpp"
#include "bold/cobyla.hpp"
#include "bold/metrics.hpp"
#include "bold/rng.hpp"

namespace bold {

enum class ConstraintMode {
  PositiveBox,  ///< 0 <= w_i <= 1
  AbsBox,       ///< |w_i| <= 1
};

inline std::string to_string(ConstraintMode mode) {
  return mode == ConstraintMode::PositiveBox ? "positive" : "abs";
}

inline ConstraintMode parse_constraint_mode(const std::string& text) {
  if (text == "positive") return ConstraintMode::PositiveBox;
  if (text == "abs") return ConstraintMode::AbsBox;
  throw Error(ErrorCode::InvalidInput, "constraint mode must be 'positive' or 'abs', got '" + text + "'");
}

/// Box bounds as 2*dim linear inequalities (>= 0 feasible).
inline std::vector<Constraint> box_constraints(ConstraintMode mode, std::size_t dim = 3) {
  std::vector<Constraint> out;
  out.reserve(2 * dim);
  for (std::size_t i = 0; i < dim; ++i) {
    if (mode == ConstraintMode::PositiveBox) {
      out.emplace_back([i](std::span<const double> w) { return w[i]; });
    } else {
      out.emplace_back([i](std::span<const double> w) { return 1.0 + w[i]; });
    }
    out.emplace_back([i](std::span<const double> w) { return 1.0 - w[i]; });
  }
  return out;
}

inline bool within_box(const Weights& w, ConstraintMode mode, double tol = kTolerance.validation) {
  for (double v : w) {
    const double lo = mode == ConstraintMode::PositiveBox ? 0.0 : -1.0;
    if (v < lo - tol || v > 1.0 + tol) return false;
  }
  return true;
}

struct CvFold {
  std::vector<std::string> test;
  std::vector<std::string> validation;
};

struct CvPlan {
  std::vector<CvFold> folds;
  std::uint64_t seed = kDefaultSeed;
};

/// Seeded shuffle, then contiguous partition; the first |ids| mod folds parts
/// get one extra id.
inline CvPlan kfold_split(std::span<const std::string> ids, std::size_t folds = 5,
                          std::uint64_t seed = kDefaultSeed) {
  if (folds < 2) throw Error(ErrorCode::InvalidInput, "k-fold split needs at least two folds");
  if (ids.size() < folds) {
    throw Error(ErrorCode::InvalidInput, "k-fold split of " + std::to_string(ids.size()) + " ids into " +
                                             std::to_string(folds) + " folds");
  }
  std::vector<std::string> order(ids.begin(), ids.end());
  Rng rng(seed);
  rng.shuffle(std::span<std::string>(order));

  CvPlan plan;
  plan.seed = seed;
  plan.folds.resize(folds);
  const std::size_t base = order.size() / folds;
  const std::size_t extra = order.size() % folds;
  std::size_t start = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    for (std::size_t i = 0; i < order.size(); ++i) {
      auto& dest = (i >= start && i < start + len) ? plan.folds[f].test : plan.folds[f].validation;
      dest.push_back(order[i]);
    }
    start += len;
  }
  return plan;
}

struct OptimResult {
  Weights weights = kUnitWeights;
  double objective_value = 0.0;  ///< recall_std on the fold's test part
  std::size_t iterations = 0;    ///< objective evaluations
  bool converged = false;
  CobylaStatus status = CobylaStatus::Converged;
  BiasReport monitor;  ///< validation part, debiased with the fold prior
  Distribution fold_prior = Distribution::uniform(2);
  std::vector<CobylaEval> trace;
};

struct WeightedOptions {
  ConstraintMode constraint = ConstraintMode::PositiveBox;
  CobylaOptions solver{};
  std::size_t folds = 5;
  /// When set the optimizer is skipped and these weights are used per fold.
  std::optional<Weights> frozen;
  MetricOptions metrics{};
};

struct WeightedResult {
  PriorEstimate estimate;
  std::vector<PredictionRecord> debiased;
  std::vector<OptimResult> folds;
  CvPlan plan;
};

namespace detail {

inline std::unordered_map<std::string, const PredictionRecord*> index_by_id(
    std::span<const PredictionRecord> preds) {
  std::unordered_map<std::string, const PredictionRecord*> out;
  out.reserve(preds.size());
  for (const auto& rec : preds) {
    if (!out.emplace(rec.task_id, &rec).second) {
      throw Error(ErrorCode::InvalidInput, "duplicate prediction for task " + rec.task_id);
    }
  }
  return out;
}

inline std::vector<PredictionRecord> select(const std::unordered_map<std::string, const PredictionRecord*>& index,
                                            std::span<const std::string> ids) {
  std::vector<PredictionRecord> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw Error(ErrorCode::IdMismatch, "no default prediction for sampled task " + id);
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace detail

/// Seed of the cross-validation shuffle, derived from the run seed.
inline std::uint64_t cv_seed(std::uint64_t seed) { return derive_seed(seed, "kfold"); }

inline WeightedResult weighted_bold(std::span<const std::string> dataset, std::span<const PredictionRecord> preds,
                                    const AttackedObservations& attacked, const GoldMap& gold,
                                    std::size_t n_options, double k, std::uint64_t seed = kDefaultSeed,
                                    const WeightedOptions& options = {}) {
  if (options.frozen && !within_box(*options.frozen, options.constraint)) {
    throw Error(ErrorCode::InvalidInput, "frozen weights violate the " + to_string(options.constraint) + " box");
  }
  WeightedResult out;
  auto sample = sample_estimation_set(dataset, k, seed);
  out.plan = kfold_split(sample, options.folds, cv_seed(seed));
  const auto index = detail::index_by_id(preds);
  const auto constraints = box_constraints(options.constraint);

  std::vector<double> acc(n_options, 0.0);
  for (const auto& fold : out.plan.folds) {
    const auto test_preds = detail::select(index, fold.test);
    const auto val_preds = detail::select(index, fold.validation);

    auto fold_objective = [&](const Weights& w) {
      const Distribution prior = prior_over(fold.test, attacked, w);
      return recall_std(tally(debias_dataset(test_preds, prior), gold, n_options));
    };

    OptimResult res;
    if (options.frozen) {
      res.weights = *options.frozen;
      res.objective_value = fold_objective(res.weights);
      res.iterations = 1;
      res.converged = true;
      res.status = CobylaStatus::Converged;
    } else {
      Objective f = [&](std::span<const double> x) { return fold_objective(Weights{x[0], x[1], x[2]}); };
      // [1,1,1] is feasible in both modes.
      const std::vector<double> x0(kUnitWeights.begin(), kUnitWeights.end());
      auto sol = cobyla_minimize(f, std::span<const Constraint>(constraints), std::span<const double>(x0),
                                 options.solver);
      res.weights = Weights{sol.x[0], sol.x[1], sol.x[2]};
      res.objective_value = sol.objective;
      res.iterations = sol.evaluations;
      res.converged = sol.converged;
      res.status = sol.status;
      res.trace = std::move(sol.trace);
    }
    res.fold_prior = prior_over(fold.test, attacked, res.weights);
    res.monitor = bias_report(tally(debias_dataset(val_preds, res.fold_prior), gold, n_options), options.metrics);

    if (res.fold_prior.size() != n_options) {
      throw Error(ErrorCode::InconsistentArity, "attacked observations do not match the option count");
    }
    const double share = static_cast<double>(fold.test.size()) / static_cast<double>(sample.size());
    for (std::size_t i = 0; i < n_options; ++i) acc[i] += share * res.fold_prior[i];
    out.folds.push_back(std::move(res));
  }

  Weights mean_w{0.0, 0.0, 0.0};
  for (const auto& r : out.folds) {
    for (std::size_t j = 0; j < mean_w.size(); ++j) mean_w[j] += r.weights[j] / static_cast<double>(out.folds.size());
  }
  out.estimate = PriorEstimate{normalize(acc), k, seed, mean_w, std::move(sample)};
  out.debiased = debias_dataset(preds, out.estimate.prior);
  return out;
}

}  // namespace bold
