#include <cmath>

#include <gtest/gtest.h>

#include "bold/calib.hpp"
#include "bold/metrics.hpp"
#include "bold/simulate.hpp"

using namespace bold;

namespace {

double linf(const Distribution& a, const Distribution& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

SimSpec decreasing(std::size_t n_tasks = 1000) {
  SimSpec s;
  s.n_tasks = n_tasks;
  s.planted_bias = Distribution({0.4, 0.3, 0.2, 0.1});
  return s;
}

}  // namespace

TEST(Simulate, UnbiasedPerfectModel) {
  SimSpec s;
  s.competence = 1.0;
  auto ds = simulate_dataset(s);
  for (std::size_t t = 0; t < ds.tasks.size(); ++t) {
    const auto& p = *ds.default_preds[t].probs;
    EXPECT_GE(p[*ds.tasks[t].gold_index], 1.0 - 1e-9);
  }
  auto est = estimate_global_prior(ds.ids(), ds.attacked, 1.0);
  EXPECT_LE(linf(est.prior, Distribution::uniform(4)), 1e-12);
  auto after = debias_dataset(ds.default_preds, est);
  for (std::size_t t = 0; t < after.size(); ++t) EXPECT_EQ(after[t].choice, ds.default_preds[t].choice);
}

TEST(Simulate, AttackedObservationsEqualPlantedBias) {
  auto ds = simulate_dataset(decreasing());
  for (const auto& log : ds.attack_logs) {
    for (const auto& rec : log) EXPECT_EQ(*rec.probs, Distribution({0.4, 0.3, 0.2, 0.1}));
  }
  for (const auto& [id, dec] : ds.attacked) EXPECT_TRUE(dec.complete());
}

TEST(Simulate, EnumerationOverGoldPositions) {
  auto s = decreasing(4);
  s.placement = GoldPlacement::Cycle;
  auto ds = simulate_dataset(s);
  auto report = bias_report(ds.default_preds, ds.gold, 4);
  // Gold 0, 1, 2 are answered correctly; gold 3 loses to option 0.
  EXPECT_DOUBLE_EQ(report.accuracy, 75.0);
  EXPECT_NEAR(report.recall_std, 43.30127018922193, 1e-9);

  for (std::size_t t = 0; t < 4; ++t) {
    const auto& per_task_bias = *ds.attack_logs[0][t].probs;
    auto recovered = debias(*ds.default_preds[t].probs, per_task_bias);
    EXPECT_LE(linf(recovered, ds.task_content[t]), 1e-9);
    EXPECT_EQ(argmax_first(recovered), t);
  }
}

TEST(Simulate, SeedStabilityAndOrdering) {
  auto a = simulate_dataset(decreasing(300));
  auto b = simulate_dataset(decreasing(300));
  EXPECT_EQ(a.default_preds, b.default_preds);
  EXPECT_EQ(a.tasks, b.tasks);
  auto c = decreasing(300);
  c.seed = 2;
  EXPECT_NE(simulate_dataset(c).tasks, a.tasks);
  // The first tasks of a longer run are the same tasks.
  auto longer = simulate_dataset(decreasing(600));
  for (std::size_t t = 0; t < 300; ++t) EXPECT_EQ(longer.tasks[t], a.tasks[t]);
  EXPECT_EQ(a.tasks[7].options[2], "opt-7-2");
  EXPECT_EQ(a.tasks[7].task_id, "sim-000007");
}

TEST(Simulate, SchemaValidRecords) {
  auto s = decreasing(200);
  s.noise_scale = 0.1;
  auto ds = simulate_dataset(s);
  for (const auto& t : ds.tasks) EXPECT_NO_THROW(t.validate());
  for (const auto& r : ds.default_preds) EXPECT_NO_THROW(r.validate());
  for (const auto& log : ds.attack_logs) {
    for (const auto& r : log) {
      EXPECT_NO_THROW(r.validate());
      EXPECT_TRUE(r.variant.is_decomposition());
    }
  }
}

TEST(Simulate, InvalidSpecs) {
  auto s = decreasing();
  s.n_tasks = 0;
  EXPECT_THROW(simulate_dataset(s), Error);
  s = decreasing();
  s.competence = 1.5;
  EXPECT_THROW(simulate_dataset(s), Error);
  s = decreasing();
  s.n_options = 3;
  EXPECT_THROW(simulate_dataset(s), Error);
  s = decreasing();
  s.planted_bias = Distribution({0.5, 0.5, 0.0, 0.0});
  EXPECT_THROW(simulate_dataset(s), Error);
  s = decreasing();
  s.noise_scale = -1.0;
  EXPECT_THROW(simulate_dataset(s), Error);
}

TEST(OraclePrior, ClosedForm) {
  auto u = oracle_prior(SimSpec{});
  EXPECT_LE(linf(u.prior, Distribution::uniform(4)), 1e-15);
  // softmax([1.2, 0.9, 0.6, 0.3]) at 40 digits.
  auto o = oracle_prior(decreasing());
  EXPECT_NEAR(o.prior[0], 0.370892433543665148, 1e-15);
  EXPECT_NEAR(o.prior[1], 0.274763872682130305, 1e-15);
  EXPECT_NEAR(o.prior[2], 0.203550083267993840, 1e-15);
  EXPECT_NEAR(o.prior[3], 0.150793610506210708, 1e-15);
  EXPECT_EQ(o.samples, 0u);
}

TEST(OraclePrior, MonteCarloBand) {
  auto s = decreasing(5000);
  s.noise_scale = 0.05;
  auto o = oracle_prior(s, 100000);
  EXPECT_EQ(o.samples, 100000u);
  for (double se : o.std_error) {
    EXPECT_GT(se, 0.0);
    EXPECT_LT(se, 1e-3);
  }
  auto ds = simulate_dataset(s);
  auto est = estimate_global_prior(ds.ids(), ds.attacked, 1.0);
  for (std::size_t i = 0; i < 4; ++i) {
    // Sampling sd of one draw, recovered from the Monte-Carlo standard error.
    const double sd = o.std_error[i] * std::sqrt(static_cast<double>(o.samples));
    const double band = 5.0 * (sd / std::sqrt(5000.0) + o.std_error[i]);
    EXPECT_NEAR(est.prior[i], o.prior[i], band) << i;
  }
}

TEST(Simulate, FullBudgetReproducesOracle) {
  auto ds = simulate_dataset(decreasing(2000));
  auto est = estimate_global_prior(ds.ids(), ds.attacked, 1.0);
  EXPECT_LE(linf(est.prior, oracle_prior(decreasing()).prior), 1e-9);
}

TEST(Simulate, BoldNeverLowersAccuracyWithoutNoise) {
  const std::vector<Distribution> biases = {Distribution({0.4, 0.3, 0.2, 0.1}), Distribution({0.1, 0.2, 0.3, 0.4}),
                                            Distribution({0.55, 0.15, 0.15, 0.15})};
  for (const auto& b : biases) {
    for (double c : {0.3, 0.5, 0.8}) {
      for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        SimSpec s;
        s.n_tasks = 2000;
        s.planted_bias = b;
        s.competence = c;
        s.seed = seed;
        auto ds = simulate_dataset(s);
        auto est = estimate_global_prior(ds.ids(), ds.attacked, 0.5, seed);
        const double before = accuracy(ds.default_preds, ds.gold, 4);
        const double after = accuracy(debias_dataset(ds.default_preds, est), ds.gold, 4);
        EXPECT_GE(after, before) << "competence " << c << " seed " << seed;
      }
    }
  }
}
