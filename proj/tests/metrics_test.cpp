#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "bold/fixtures.hpp"
#include "bold/metrics.hpp"
#include "test_util.hpp"

using namespace bold;
using bold::testkit::abstain;
using bold::testkit::vote;

namespace {

// Four records, gold [0,0,1,1], every vote on option 0.
struct FourRecords {
  std::vector<PredictionRecord> preds{vote("a", 0), vote("b", 0), vote("c", 0), vote("d", 0)};
  GoldMap gold{{"a", 0}, {"b", 0}, {"c", 1}, {"d", 1}};
};

BiasReport fixture_report(const std::string& file, const std::string& setting) {
  const auto table = load_fixture(std::string(BOLD_FIXTURE_DIR) + "/" + file);
  const auto realized = realize_row(table, table.row(setting));
  GoldMap gold;
  for (const auto& t : realized.tasks) gold[t.task_id] = *t.gold_index;
  return bias_report(realized.preds, gold, realized.n_options, MetricOptions{AbstentionPolicy::Exclude});
}

}  // namespace

TEST(Accuracy, AllCorrect) {
  std::vector<PredictionRecord> p{vote("x", 1), vote("y", 2)};
  GoldMap g{{"x", 1}, {"y", 2}};
  EXPECT_DOUBLE_EQ(accuracy(p, g, 3), 100.0);
}

TEST(Accuracy, AbstentionPolicies) {
  std::vector<PredictionRecord> p{vote("x", 1), vote("y", 0), abstain("z"), vote("w", 0)};
  GoldMap g{{"x", 1}, {"y", 0}, {"z", 1}, {"w", 1}};
  EXPECT_DOUBLE_EQ(accuracy(p, g, 2), 50.0);
  EXPECT_NEAR(accuracy(p, g, 2, AbstentionPolicy::Exclude), 200.0 / 3.0, 1e-12);
}

TEST(Accuracy, MissingGold) {
  std::vector<PredictionRecord> p{vote("x", 1), vote("q", 0)};
  GoldMap g{{"x", 1}};
  try {
    accuracy(p, g, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingGold);
  }
}

TEST(Accuracy, ArityMismatch) {
  std::vector<PredictionRecord> p{testkit::soft("x", Distribution({0.2, 0.3, 0.5}))};
  GoldMap g{{"x", 1}};
  try {
    accuracy(p, g, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InconsistentArity);
  }
}

TEST(PerOptionPrf, AllOnOne) {
  FourRecords f;
  auto s = per_option_prf(f.preds, f.gold, 2);
  EXPECT_DOUBLE_EQ(s.recall[0], 1.0);
  EXPECT_DOUBLE_EQ(s.recall[1], 0.0);
  EXPECT_NEAR(s.f1[0], 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(s.f1[1], 0.0);
}

TEST(PerOptionPrf, DegenerateClass) {
  std::vector<PredictionRecord> p{vote("x", 0), vote("y", 1)};
  GoldMap g{{"x", 0}, {"y", 1}};
  auto s = per_option_prf(p, g, 3);
  EXPECT_DOUBLE_EQ(s.recall[0], 1.0);
  EXPECT_DOUBLE_EQ(s.f1[1], 1.0);
  EXPECT_DOUBLE_EQ(s.recall[2], 0.0);
  EXPECT_DOUBLE_EQ(s.f1[2], 0.0);
}

TEST(StdAcrossOptions, Population) {
  const std::vector<double> a{1.0, 0.0};
  EXPECT_DOUBLE_EQ(std_across_options(a), 0.5);
  const std::vector<double> c{0.3, 0.3, 0.3};
  EXPECT_DOUBLE_EQ(std_across_options(c), 0.0);
  const std::vector<double> one{1.0};
  EXPECT_THROW(std_across_options(one), Error);
}

TEST(JsDistance, KnownValues) {
  EXPECT_NEAR(js_distance(Distribution({1.0, 0.0}), Distribution({0.0, 1.0})), 1.0, 1e-12);
  // sqrt(H(M) - (H(P) + H(Q)) / 2), M = [0.75, 0.25], evaluated at 40 digits.
  EXPECT_NEAR(js_distance(Distribution({0.5, 0.5}), Distribution({1.0, 0.0})), 0.557923045284143881, 1e-12);
  auto p = Distribution({0.2, 0.3, 0.5});
  EXPECT_DOUBLE_EQ(js_distance(p, p), 0.0);
  const std::vector<double> a{0.5, 0.5}, b{0.2, 0.3, 0.5};
  EXPECT_THROW(js_distance(a, b), Error);
}

TEST(JsStd, MatchingMarginalsGiveZero) {
  std::vector<PredictionRecord> p{vote("x", 0), vote("y", 1), vote("z", 2)};
  GoldMap g{{"x", 1}, {"y", 2}, {"z", 0}};
  EXPECT_DOUBLE_EQ(js_std(p, g, 3), 0.0);
}

TEST(JsStd, SymmetricBinary) {
  FourRecords f;
  auto t = tally(f.preds, f.gold, 2);
  auto d = per_option_js(t);
  EXPECT_NEAR(d[0], 0.557923045284143881, 1e-12);
  EXPECT_NEAR(d[1], 0.557923045284143881, 1e-12);
  EXPECT_NEAR(js_std(t), 0.0, 1e-9);
}

TEST(JsStd, ThreeOptionsAllOnFirst) {
  std::vector<PredictionRecord> p{vote("x", 0), vote("y", 0), vote("z", 0)};
  GoldMap g{{"x", 0}, {"y", 1}, {"z", 2}};
  auto t = tally(p, g, 3);
  auto d = per_option_js(t);
  // Binary marginals [1,0] vs [1/3,2/3] and [0,1] vs [1/3,2/3], 40-digit oracle.
  EXPECT_NEAR(d[0], 0.677604543245722901, 1e-12);
  EXPECT_NEAR(d[1], 0.436891868339420421, 1e-12);
  EXPECT_NEAR(d[2], 0.436891868339420421, 1e-12);
  EXPECT_NEAR(js_std(t), 11.3473043162532918, 1e-9);
}

TEST(BiasReport, Perfect) {
  std::vector<PredictionRecord> p{vote("x", 0), vote("y", 1), vote("z", 2), vote("w", 3)};
  GoldMap g{{"x", 0}, {"y", 1}, {"z", 2}, {"w", 3}};
  auto r = bias_report(p, g, 4);
  EXPECT_DOUBLE_EQ(r.accuracy, 100.0);
  EXPECT_DOUBLE_EQ(r.f1_mean, 100.0);
  EXPECT_DOUBLE_EQ(r.recall_std, 0.0);
  EXPECT_DOUBLE_EQ(r.f1_std, 0.0);
  EXPECT_DOUBLE_EQ(r.js_std, 0.0);
}

TEST(BiasReport, FourRecordExample) {
  FourRecords f;
  auto r = bias_report(f.preds, f.gold, 2);
  EXPECT_NEAR(r.f1_mean, 100.0 / 3.0, 1e-9);
  EXPECT_NEAR(r.f1_std, 100.0 / 3.0, 1e-9);
  EXPECT_DOUBLE_EQ(r.recall_std, 50.0);
  EXPECT_DOUBLE_EQ(r.accuracy, 50.0);
}

TEST(PercentDelta, Basic) {
  EXPECT_NEAR(*percent_delta(45.88, 44.79), 100.0 * (45.88 - 44.79) / 44.79, 1e-12);
  EXPECT_FALSE(percent_delta(1.0, 0.0).has_value());
}

TEST(Fixtures, SeViLaStarDefault) {
  auto r = fixture_report("sevila_star.json", "Default");
  EXPECT_NEAR(r.accuracy, 46.28, 0.01);
  EXPECT_EQ(r.correct, 3285u);
}

TEST(Fixtures, VideoLlavaStarDefault) {
  auto r = fixture_report("videollava_star.json", "Default");
  EXPECT_NEAR(r.accuracy, 34.71, 0.01);
  EXPECT_EQ(r.correct, 2464u);
}

TEST(Fixtures, VideoLlamaNextQaDefaultCounts) {
  auto r = fixture_report("videollama_nextqa.json", "Default");
  EXPECT_EQ(r.per_option_counts, (std::vector<std::size_t>{1430, 3285, 2727, 1002, 117}));
  EXPECT_EQ(r.abstained, 3u);
}

TEST(Fixtures, VideoLlamaVideoMmeDefaultCounts) {
  auto r = fixture_report("videollama_videomme.json", "Default");
  EXPECT_EQ(r.per_option_counts, (std::vector<std::size_t>{474, 1344, 757, 70}));
  EXPECT_EQ(r.abstained, 55u);
}

TEST(Fixtures, RejectsBadTotals) {
  const char* text = R"({"model":"m","dataset":"STAR","options":4,
    "rows":[{"setting":"Default","counts":[1,2,3,4],"na":0,"correct":1,"accuracy":10.0}]})";
  try {
    parse_fixture(text, "inline");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaError);
  }
}

// ---- properties

TEST(MetricProperties, RecordOrderInvariance) {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.uniform_below(4);
    auto lab = testkit::random_labelled(rng, 50 + rng.uniform_below(100), n);
    auto before = bias_report(lab.preds, lab.gold, n);
    rng.shuffle(std::span<PredictionRecord>(lab.preds));
    EXPECT_EQ(bias_report(lab.preds, lab.gold, n), before);
  }
}

TEST(MetricProperties, RelabelingInvariance) {
  Rng rng(22);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng.uniform_below(5);
    auto lab = testkit::random_labelled(rng, 30 + rng.uniform_below(200), n);
    const auto perm = rng.permutation(n);
    auto moved = lab;
    for (auto& rec : moved.preds) {
      if (rec.choice) rec.choice = perm[*rec.choice];
    }
    for (auto& [id, g] : moved.gold) g = perm[g];
    const auto a = bias_report(lab.preds, lab.gold, n);
    const auto b = bias_report(moved.preds, moved.gold, n);
    EXPECT_NEAR(a.accuracy, b.accuracy, 1e-9);
    EXPECT_NEAR(a.f1_mean, b.f1_mean, 1e-9);
    EXPECT_NEAR(a.recall_std, b.recall_std, 1e-9);
    EXPECT_NEAR(a.f1_std, b.f1_std, 1e-9);
    EXPECT_NEAR(a.js_std, b.js_std, 1e-9);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(a.per_option_counts[i], b.per_option_counts[perm[i]]);
      EXPECT_NEAR(a.per_option_recall[i], b.per_option_recall[perm[i]], 1e-12);
    }
  }
}

TEST(MetricProperties, F1MeanBounded) {
  Rng rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.uniform_below(5);
    auto lab = testkit::random_labelled(rng, 20 + rng.uniform_below(100), n);
    auto r = bias_report(lab.preds, lab.gold, n);
    EXPECT_GE(r.f1_mean, 0.0);
    EXPECT_LE(r.f1_mean, 100.0);
    EXPECT_LE(r.accuracy, 100.0);
  }
}

TEST(MetricProperties, JsSymmetryAndTriangle) {
  Rng rng(24);
  for (int trial = 0; trial < 3000; ++trial) {
    const std::size_t n = 2 + rng.uniform_below(5);
    auto p = testkit::random_distribution(rng, n);
    auto q = testkit::random_distribution(rng, n);
    auto r = testkit::random_distribution(rng, n);
    EXPECT_EQ(js_distance(p, q), js_distance(q, p)) << "exact symmetry";
    EXPECT_LE(js_distance(p, r), js_distance(p, q) + js_distance(q, r) + 1e-9);
    EXPECT_GE(js_distance(p, q), 0.0);
    EXPECT_LE(js_distance(p, q), 1.0);
  }
}
