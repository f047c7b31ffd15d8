#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "bold/cobyla.hpp"
#include "bold/simulate.hpp"
#include "bold/weighted.hpp"

using namespace bold;

namespace {

std::vector<Constraint> unit_box(std::size_t dim) { return box_constraints(ConstraintMode::PositiveBox, dim); }

CobylaOptions tight() {
  CobylaOptions o;
  o.rho_begin = 0.5;
  o.rho_end = 1e-8;
  o.max_evals = 2000;
  return o;
}

struct Quadratic {
  const char* name;
  Objective f;
  std::vector<Constraint> g;
  std::vector<double> x0;
  std::vector<double> argmin;
  double min;
};

std::vector<Quadratic> quadratic_suite() {
  std::vector<Quadratic> s;
  s.push_back({"interior",
               [](std::span<const double> x) { return std::pow(x[0] - 0.3, 2) + std::pow(x[1] - 0.6, 2); },
               unit_box(2), {1.0, 1.0}, {0.3, 0.6}, 0.0});
  s.push_back({"corner",
               [](std::span<const double> x) { return std::pow(x[0] - 2.0, 2) + std::pow(x[1] + 1.0, 2); },
               unit_box(2), {0.5, 0.5}, {1.0, 0.0}, 2.0});
  s.push_back({"face-3d",
               [](std::span<const double> x) {
                 return std::pow(x[0] - 0.5, 2) + 2.0 * std::pow(x[1] - 1.5, 2) + 3.0 * std::pow(x[2] + 0.2, 2);
               },
               unit_box(3), {1.0, 1.0, 1.0}, {0.5, 1.0, 0.0}, 0.62});
  s.push_back({"coupled",
               [](std::span<const double> x) { return x[0] * x[0] + x[1] * x[1] + x[0] * x[1] - 3.0 * x[0]; },
               unit_box(2), {0.0, 1.0}, {1.0, 0.0}, -2.0});
  std::vector<Constraint> half_plane{[](std::span<const double> x) { return x[0] + x[1] - 1.0; }};
  s.push_back({"half-plane", [](std::span<const double> x) { return x[0] * x[0] + x[1] * x[1]; }, half_plane,
               {2.0, 2.0}, {0.5, 0.5}, 0.5});
  return s;
}

struct SimRun {
  SimDataset ds;
  std::vector<std::string> ids;
};

SimRun small_sim(std::size_t n_tasks = 600, double noise = 0.05) {
  SimSpec spec;
  spec.n_tasks = n_tasks;
  spec.planted_bias = Distribution({0.4, 0.3, 0.2, 0.1});
  spec.noise_scale = noise;
  SimRun r{simulate_dataset(spec), {}};
  r.ids = r.ds.ids();
  return r;
}

}  // namespace

TEST(Cobyla, BoundaryBox) {
  Objective f = [](std::span<const double> w) { return (w[0] - 2.0) * (w[0] - 2.0); };
  auto res = cobyla_minimize(f, unit_box(1), {0.5});
  EXPECT_NEAR(res.x[0], 1.0, 1e-4);
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.status, CobylaStatus::Converged);
}

TEST(Cobyla, DiskLinear) {
  Objective f = [](std::span<const double> x) { return -x[0] - x[1]; };
  std::vector<Constraint> g{[](std::span<const double> x) { return 1.0 - x[0] * x[0] - x[1] * x[1]; }};
  auto res = cobyla_minimize(f, g, {0.0, 0.0}, tight());
  EXPECT_NEAR(res.x[0], std::sqrt(0.5), 1e-3);
  EXPECT_NEAR(res.x[1], std::sqrt(0.5), 1e-3);

  // Dense grid search over the disk as an independent check of the optimum.
  double best = std::numeric_limits<double>::infinity();
  for (int i = -1000; i <= 1000; ++i) {
    for (int j = -1000; j <= 1000; ++j) {
      const double x = i / 1000.0, y = j / 1000.0;
      if (x * x + y * y <= 1.0) best = std::min(best, -x - y);
    }
  }
  EXPECT_NEAR(res.objective, best, 2e-3);
  EXPECT_LE(res.objective, best + 1e-6);
}

TEST(Cobyla, UnconstrainedQuadratic) {
  Objective f = [](std::span<const double> x) { return x[0] * x[0] + x[1] * x[1]; };
  CobylaOptions o;
  o.rho_begin = 1.0;
  o.rho_end = 1e-6;
  o.max_evals = 1000;
  auto res = cobyla_minimize(f, std::vector<Constraint>{}, {3.0, -4.0}, o);
  EXPECT_NEAR(res.x[0], 0.0, 1e-4);
  EXPECT_NEAR(res.x[1], 0.0, 1e-4);
}

TEST(Cobyla, ConvexQuadraticSuite) {
  for (auto& q : quadratic_suite()) {
    auto res = cobyla_minimize(q.f, q.g, q.x0, tight());
    EXPECT_NEAR(res.objective, q.min, 1e-6) << q.name;
    for (std::size_t i = 0; i < q.argmin.size(); ++i) EXPECT_NEAR(res.x[i], q.argmin[i], 1e-3) << q.name;
    EXPECT_LE(res.max_violation, 1e-6) << q.name;
  }
}

TEST(Cobyla, BestSoFarNonIncreasingAndFeasible) {
  for (auto& q : quadratic_suite()) {
    auto res = cobyla_minimize(q.f, q.g, q.x0, tight());
    ASSERT_EQ(res.trace.size(), res.evaluations);
    bool seen_feasible = false;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : res.trace) {
      if (e.max_violation <= 1e-9) {
        seen_feasible = true;
        best = std::min(best, e.objective);
      }
      if (seen_feasible) {
        EXPECT_LE(e.best_objective, best + 1e-15) << q.name;
      }
    }
    double prev = std::numeric_limits<double>::infinity();
    bool feasible_yet = false;
    for (const auto& e : res.trace) {
      feasible_yet = feasible_yet || e.max_violation <= 1e-9;
      if (!feasible_yet) continue;
      EXPECT_LE(e.best_objective, prev) << q.name;
      prev = e.best_objective;
    }
    if (seen_feasible) {
      EXPECT_LE(res.max_violation, 1e-6) << q.name;
    }
  }
}

TEST(Cobyla, NonFiniteObjective) {
  Objective f = [](std::span<const double> x) {
    return x[0] > 0.6 ? std::numeric_limits<double>::quiet_NaN() : -x[0];
  };
  auto res = cobyla_minimize(f, unit_box(1), {0.1});
  EXPECT_EQ(res.status, CobylaStatus::NumericalFailure);
  EXPECT_FALSE(res.converged);
  EXPECT_TRUE(std::isfinite(res.objective));
  EXPECT_LE(res.x[0], 0.6);
}

TEST(Cobyla, MaxEvals) {
  Objective f = [](std::span<const double> x) { return std::pow(x[0] - 0.3, 2) + std::pow(x[1] - 0.7, 2); };
  CobylaOptions o;
  o.max_evals = 5;
  o.rho_end = 1e-12;
  auto res = cobyla_minimize(f, unit_box(2), {1.0, 1.0}, o);
  EXPECT_EQ(res.status, CobylaStatus::MaxEvals);
  EXPECT_EQ(res.evaluations, 5u);
  EXPECT_FALSE(res.converged);
}

TEST(Cobyla, RejectsBadOptions) {
  Objective f = [](std::span<const double> x) { return x[0]; };
  CobylaOptions o;
  o.rho_end = 1.0;
  o.rho_begin = 0.1;
  EXPECT_THROW(cobyla_minimize(f, unit_box(1), {0.5}, o), Error);
  EXPECT_THROW(cobyla_minimize(f, unit_box(1), std::vector<double>{}), Error);
}

TEST(BoxConstraints, Modes) {
  auto pos = box_constraints(ConstraintMode::PositiveBox);
  auto abs = box_constraints(ConstraintMode::AbsBox);
  EXPECT_EQ(pos.size(), 6u);
  EXPECT_EQ(abs.size(), 6u);
  const std::vector<double> w{-0.5, 0.5, 1.0};
  EXPECT_LT(pos[0](w), 0.0);
  EXPECT_GE(abs[0](w), 0.0);
  EXPECT_TRUE(within_box({-0.5, 0.5, 1.0}, ConstraintMode::AbsBox));
  EXPECT_FALSE(within_box({-0.5, 0.5, 1.0}, ConstraintMode::PositiveBox));
  EXPECT_EQ(parse_constraint_mode("abs"), ConstraintMode::AbsBox);
  EXPECT_THROW(parse_constraint_mode("box"), Error);
}

TEST(KFold, Examples) {
  std::vector<std::string> ten, eleven;
  for (int i = 0; i < 11; ++i) {
    eleven.push_back("id" + std::to_string(i));
    if (i < 10) ten.push_back("id" + std::to_string(i));
  }
  auto plan = kfold_split(ten, 5, 1);
  std::set<std::string> seen;
  for (const auto& f : plan.folds) {
    EXPECT_EQ(f.test.size(), 2u);
    EXPECT_EQ(f.validation.size(), 8u);
    for (const auto& id : f.test) EXPECT_TRUE(seen.insert(id).second);
  }
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_EQ(kfold_split(ten, 5, 1).folds[2].test, plan.folds[2].test);

  auto odd = kfold_split(eleven, 5, 1);
  std::multiset<std::size_t> sizes;
  for (const auto& f : odd.folds) sizes.insert(f.test.size());
  EXPECT_EQ(sizes, (std::multiset<std::size_t>{2, 2, 2, 2, 3}));
  EXPECT_THROW(kfold_split(std::vector<std::string>{"a", "b"}, 5, 1), Error);
}

TEST(KFold, PartitionProperty) {
  Rng rng(51);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 5 + rng.uniform_below(200);
    const std::size_t folds = 2 + rng.uniform_below(6);
    if (n < folds) continue;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("x" + std::to_string(i));
    auto plan = kfold_split(ids, folds, rng.next_u64());
    std::set<std::string> all;
    for (const auto& f : plan.folds) {
      EXPECT_EQ(f.test.size() + f.validation.size(), n);
      std::set<std::string> test(f.test.begin(), f.test.end());
      for (const auto& v : f.validation) EXPECT_FALSE(test.count(v));
      for (const auto& id : f.test) EXPECT_TRUE(all.insert(id).second);
    }
    EXPECT_EQ(all.size(), n);
  }
}

TEST(WeightedBold, FrozenUnitWeightsReduceToBold) {
  auto run = small_sim(613);  // K = 307, not divisible by 5
  WeightedOptions opts;
  opts.frozen = kUnitWeights;
  auto w = weighted_bold(run.ids, run.ds.default_preds, run.ds.attacked, run.ds.gold, 4, 0.5, 1, opts);
  auto b = estimate_global_prior(run.ids, run.ds.attacked, 0.5, 1);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(w.estimate.prior[i], b.prior[i], 1e-9);
  EXPECT_EQ(w.estimate.sample_ids, b.sample_ids);
  auto plain = debias_dataset(run.ds.default_preds, b);
  ASSERT_EQ(plain.size(), w.debiased.size());
  for (std::size_t t = 0; t < plain.size(); ++t) {
    EXPECT_EQ(plain[t].choice, w.debiased[t].choice);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR((*plain[t].probs)[i], (*w.debiased[t].probs)[i], 1e-9);
  }
}

TEST(WeightedBold, DeterministicAndInsideBox) {
  auto run = small_sim();
  for (auto mode : {ConstraintMode::PositiveBox, ConstraintMode::AbsBox}) {
    WeightedOptions opts;
    opts.constraint = mode;
    auto a = weighted_bold(run.ids, run.ds.default_preds, run.ds.attacked, run.ds.gold, 4, 0.5, 1, opts);
    auto b = weighted_bold(run.ids, run.ds.default_preds, run.ds.attacked, run.ds.gold, 4, 0.5, 1, opts);
    EXPECT_EQ(a.estimate, b.estimate);
    EXPECT_EQ(a.debiased, b.debiased);
    ASSERT_EQ(a.folds.size(), 5u);
    for (const auto& f : a.folds) {
      EXPECT_TRUE(within_box(f.weights, mode, 1e-6)) << to_string(mode);
      EXPECT_LE(f.iterations, opts.solver.max_evals);
      // The optimizer starts at [1,1,1], so the fold objective can only improve on it.
      ASSERT_FALSE(f.trace.empty());
      EXPECT_LE(f.objective_value, f.trace.front().objective + 1e-12);
    }
  }
}

TEST(WeightedBold, FrozenWeightsOutsideBoxRejected) {
  auto run = small_sim(100);
  WeightedOptions opts;
  opts.frozen = Weights{-0.5, 1.0, 1.0};
  EXPECT_THROW(weighted_bold(run.ids, run.ds.default_preds, run.ds.attacked, run.ds.gold, 4, 0.5, 1, opts), Error);
  opts.constraint = ConstraintMode::AbsBox;
  EXPECT_NO_THROW(weighted_bold(run.ids, run.ds.default_preds, run.ds.attacked, run.ds.gold, 4, 0.5, 1, opts));
}

TEST(WeightedBold, OrderingOnPlantedBias) {
  auto run = small_sim(5000);
  const auto& g = run.ds.gold;
  const double base = recall_std(run.ds.default_preds, g, 4);
  auto b = estimate_global_prior(run.ids, run.ds.attacked, 0.5, 1);
  const double bold_std = recall_std(debias_dataset(run.ds.default_preds, b), g, 4);
  auto w = weighted_bold(run.ids, run.ds.default_preds, run.ds.attacked, g, 4, 0.5, 1);
  const double w_std = recall_std(w.debiased, g, 4);
  EXPECT_LT(bold_std, base);
  EXPECT_LE(w_std, bold_std);
}
