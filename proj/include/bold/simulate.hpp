#pragma once

// Synthetic biased model that follows the generative factorization exactly:
// observed = normalize(bias_t * content_t), where content_t puts `competence`
// on the gold option and spreads the rest evenly. Under any of the three
// decomposition attacks the content factor is uniform, so the attacked
// observation is bias_t itself.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "bold/calib.hpp"
#include "bold/core.hpp"
#include "bold/metrics.hpp"
#include "bold/rng.hpp"

namespace bold {

enum class GoldPlacement {
  Drawn,  ///< gold position sampled from gold_balance
  Cycle,  ///< task i gets gold i mod n (exact balance, for enumeration)
};

struct SimSpec {
  std::size_t n_tasks = 1000;
  std::size_t n_options = 4;
  double competence = 0.5;
  Distribution planted_bias = Distribution::uniform(4);
  Distribution gold_balance = Distribution::uniform(4);
  double noise_scale = 0.0;
  std::uint64_t seed = kDefaultSeed;
  GoldPlacement placement = GoldPlacement::Drawn;

  void validate() const {
    if (n_tasks == 0) throw Error(ErrorCode::InvalidInput, "simulation needs at least one task");
    if (n_options < 2) throw Error(ErrorCode::InvalidInput, "simulation needs at least two options");
    if (!(competence >= 0.0 && competence <= 1.0)) {
      throw Error(ErrorCode::InvalidInput, "competence must lie in [0, 1]");
    }
    if (planted_bias.size() != n_options || gold_balance.size() != n_options) {
      throw Error(ErrorCode::InvalidInput, "planted_bias and gold_balance must have n_options entries");
    }
    if (!(planted_bias.min() > 0.0)) throw Error(ErrorCode::InvalidInput, "planted_bias must be strictly positive");
    if (!(noise_scale >= 0.0 && std::isfinite(noise_scale))) {
      throw Error(ErrorCode::InvalidInput, "noise_scale must be finite and >= 0");
    }
  }
};

struct SimDataset {
  std::vector<McqaTask> tasks;
  GoldMap gold;
  std::vector<PredictionRecord> default_preds;
  AttackedObservations attacked;
  /// One log per decomposition attack, in kDecompositions order.
  std::array<std::vector<PredictionRecord>, 3> attack_logs;
  std::vector<Distribution> task_bias;
  std::vector<Distribution> task_content;

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(tasks.size());
    for (const auto& t : tasks) out.push_back(t.task_id);
    return out;
  }
};

inline std::string sim_task_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sim-%06zu", i);
  return buf;
}

/// Content factor: competence on gold, the remainder spread evenly.
inline Distribution content_distribution(std::size_t n, std::size_t gold, double competence) {
  std::vector<double> p(n, (1.0 - competence) / static_cast<double>(n - 1));
  p[gold] = competence;
  return normalize(p);
}

/// bias_t = normalize(max(planted + noise * U[-1,1), floor)).
inline Distribution jitter_bias(const Distribution& planted, double noise, Rng& rng) {
  if (noise == 0.0) return planted;
  std::vector<double> b(planted.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    b[i] = std::max(planted[i] + noise * rng.uniform_symmetric(), kTolerance.prob_floor);
  }
  return normalize(b);
}

inline std::size_t draw_index(const Distribution& d, Rng& rng) {
  const double u = rng.uniform01();
  double cum = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    cum += d[i];
    if (u < cum) return i;
  }
  // u landed in the rounding gap above the last cumulative sum.
  for (std::size_t i = d.size(); i-- > 0;) {
    if (d[i] > 0.0) return i;
  }
  return d.size() - 1;
}

inline SimDataset simulate_dataset(const SimSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_options;
  SimDataset out;
  out.tasks.reserve(spec.n_tasks);
  out.default_preds.reserve(spec.n_tasks);
  for (auto& log : out.attack_logs) log.reserve(spec.n_tasks);

  for (std::size_t t = 0; t < spec.n_tasks; ++t) {
    const std::string id = sim_task_id(t);
    Rng rng(derive_seed(spec.seed, id));
    const std::size_t g = spec.placement == GoldPlacement::Cycle ? t % n : draw_index(spec.gold_balance, rng);
    Distribution bias = jitter_bias(spec.planted_bias, spec.noise_scale, rng);
    Distribution content = content_distribution(n, g, spec.competence);

    std::vector<double> joint(n);
    for (std::size_t i = 0; i < n; ++i) joint[i] = bias[i] * content[i];
    Distribution observed = normalize(joint);

    McqaTask task;
    task.task_id = id;
    task.video_ref = "sim://" + id;
    task.question = "synthetic question " + std::to_string(t);
    for (std::size_t i = 0; i < n; ++i) task.options.push_back("opt-" + std::to_string(t) + "-" + std::to_string(i));
    task.gold_index = g;
    out.tasks.push_back(std::move(task));
    out.gold.emplace(id, g);

    const std::size_t choice = argmax_first(observed);
    out.default_preds.push_back(PredictionRecord{id, AttackKind{}, observed, choice, false});

    Decomposed dec;
    for (std::size_t j = 0; j < kDecompositions.size(); ++j) {
      dec.set(kDecompositions[j], bias);
      out.attack_logs[j].push_back(
          PredictionRecord{id, AttackKind::of(kDecompositions[j]), bias, argmax_first(bias), false});
    }
    out.attacked.emplace(id, std::move(dec));
    out.task_bias.push_back(std::move(bias));
    out.task_content.push_back(std::move(content));
  }
  return out;
}

struct OraclePrior {
  Distribution prior;
  std::vector<double> std_error;  ///< per entry; zeros for the exact case
  std::size_t samples = 0;
};

/// Expected BOLD prior: softmax(3 * planted) without noise, else a
/// Monte-Carlo mean of softmax(3 * bias_t) over jittered draws.
inline OraclePrior oracle_prior(const SimSpec& spec, std::size_t mc_samples = 100000) {
  spec.validate();
  const std::size_t n = spec.n_options;
  auto prior_of = [](const Distribution& b) {
    std::vector<double> logits(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) logits[i] = 3.0 * b[i];
    return softmax(logits);
  };
  if (spec.noise_scale == 0.0) return OraclePrior{prior_of(spec.planted_bias), std::vector<double>(n, 0.0), 0};
  if (mc_samples < 2) throw Error(ErrorCode::InvalidInput, "Monte-Carlo oracle needs at least two samples");

  Rng rng(derive_seed(spec.seed, "oracle-prior"));
  std::vector<double> mean(n, 0.0), m2(n, 0.0);
  for (std::size_t s = 0; s < mc_samples; ++s) {
    const Distribution p = prior_of(jitter_bias(spec.planted_bias, spec.noise_scale, rng));
    const double count = static_cast<double>(s + 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double delta = p[i] - mean[i];
      mean[i] += delta / count;
      m2[i] += delta * (p[i] - mean[i]);
    }
  }
  std::vector<double> se(n);
  const double N = static_cast<double>(mc_samples);
  for (std::size_t i = 0; i < n; ++i) se[i] = std::sqrt(m2[i] / (N - 1.0) / N);
  return OraclePrior{normalize(mean), std::move(se), mc_samples};
}

}  // namespace bold
