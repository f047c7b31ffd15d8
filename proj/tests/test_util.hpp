#pragma once

// Small builders and generators shared by the test binaries.

#include <string>
#include <vector>

#include "bold/core.hpp"
#include "bold/metrics.hpp"
#include "bold/rng.hpp"

namespace bold::testkit {

inline PredictionRecord vote(std::string id, std::size_t choice) {
  return PredictionRecord{std::move(id), AttackKind{}, std::nullopt, choice, false};
}

inline PredictionRecord abstain(std::string id) {
  return PredictionRecord{std::move(id), AttackKind{}, std::nullopt, std::nullopt, true};
}

inline PredictionRecord soft(std::string id, Distribution d) {
  const std::size_t c = argmax_first(d);
  return PredictionRecord{std::move(id), AttackKind{}, std::move(d), c, false};
}

/// Random distribution with every entry above `min_entry`.
inline Distribution random_distribution(Rng& rng, std::size_t n, double min_entry = 1e-10) {
  std::vector<double> w(n);
  for (auto& x : w) x = rng.uniform01() + 1e-3;
  auto d = normalize(w);
  std::vector<double> v(d.begin(), d.end());
  for (auto& x : v) x = std::max(x, min_entry * 2);
  return normalize(v);
}

/// Random labelled prediction set: ids "r<i>", gold drawn uniformly,
/// votes drawn uniformly, a few abstentions.
struct Labelled {
  std::vector<PredictionRecord> preds;
  GoldMap gold;
};

inline Labelled random_labelled(Rng& rng, std::size_t count, std::size_t n, double abstain_rate = 0.05) {
  Labelled out;
  for (std::size_t i = 0; i < count; ++i) {
    std::string id = "r" + std::to_string(i);
    out.gold[id] = rng.uniform_below(n);
    if (rng.uniform01() < abstain_rate) {
      out.preds.push_back(abstain(id));
    } else {
      // Skewed votes so the std metrics are not all near zero.
      const std::size_t c = rng.uniform01() < 0.4 ? 0 : rng.uniform_below(n);
      out.preds.push_back(vote(id, c));
    }
  }
  return out;
}

}  // namespace bold::testkit
