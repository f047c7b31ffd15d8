#pragma once

// Deterministic dataset modifications: the three ill-defining decompositions
// and the option/question/video settings used to probe positional bias.
// Text-level changes are applied to the task; video-level changes are only
// recorded as directives for whatever renders the frames downstream.

#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "bold/core.hpp"
#include "bold/rng.hpp"

namespace bold {

/// Non-textual instructions attached to a modified task.
struct Directives {
  std::optional<std::string> frames;  ///< "black" or "gold-span"
  std::optional<TimeSpan> span;

  bool empty() const { return !frames && !span; }
  friend bool operator==(const Directives&, const Directives&) = default;
};

struct AttackedTask {
  McqaTask task;
  Directives directives;
  /// For option-moving settings: output position i holds source option
  /// permutation[i]. Empty when options did not move.
  std::vector<std::size_t> permutation;

  friend bool operator==(const AttackedTask&, const AttackedTask&) = default;
};

/// Pluggable question rewriter; no built-in provider exists.
using RephraseHook = std::function<std::string(const McqaTask&, std::uint64_t seed)>;

struct AttackContext {
  RephraseHook rephrase;
};

namespace detail {

inline void require_gold(const McqaTask& task, const AttackKind& attack) {
  if (!task.gold_index) {
    throw Error(ErrorCode::MissingGold, attack.name() + " needs a gold answer but task " + task.task_id +
                                             " has none");
  }
}

inline void apply_permutation(McqaTask& task, const std::vector<std::size_t>& perm) {
  std::vector<std::string> moved(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) moved[i] = task.options[perm[i]];
  if (task.gold_index) {
    for (std::size_t i = 0; i < perm.size(); ++i) {
      if (perm[i] == *task.gold_index) {
        task.gold_index = i;
        break;
      }
    }
  }
  task.options = std::move(moved);
}

}  // namespace detail

inline AttackedTask apply_attack(const McqaTask& source, const AttackKind& attack, std::uint64_t seed,
                                 const AttackContext& context = {}) {
  source.validate();
  const std::size_t n = source.option_count();
  if (attack.has_position() && attack.position >= n) {
    throw Error(ErrorCode::InvalidInput, attack.name() + " position out of range for task " + source.task_id);
  }
  AttackedTask out{source, {}, {}};
  McqaTask& task = out.task;
  switch (attack.tag) {
    case AttackTag::Default:
      break;
    case AttackTag::Shuffle: {
      Rng rng(seed);
      out.permutation = rng.permutation(n);
      detail::apply_permutation(task, out.permutation);
      break;
    }
    case AttackTag::CorrectInPosition: {
      detail::require_gold(source, attack);
      out.permutation.resize(n);
      std::iota(out.permutation.begin(), out.permutation.end(), std::size_t{0});
      std::swap(out.permutation[*source.gold_index], out.permutation[attack.position]);
      detail::apply_permutation(task, out.permutation);
      break;
    }
    case AttackTag::CorrectInPositionShuffled: {
      detail::require_gold(source, attack);
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < n; ++i) {
        if (i != *source.gold_index) rest.push_back(i);
      }
      Rng rng(seed);
      rng.shuffle(std::span<std::size_t>(rest));
      out.permutation.clear();
      auto next = rest.begin();
      for (std::size_t i = 0; i < n; ++i) {
        out.permutation.push_back(i == attack.position ? *source.gold_index : *next++);
      }
      detail::apply_permutation(task, out.permutation);
      break;
    }
    case AttackTag::AddEmptyOption:
      task.options.emplace_back();
      break;
    case AttackTag::AllIdentical: {
      const std::string text = source.options[attack.position];
      task.options.assign(n, text);
      task.gold_index.reset();
      break;
    }
    case AttackTag::AllCorrect: {
      detail::require_gold(source, attack);
      const std::string text = source.options[*source.gold_index];
      task.options.assign(n, text);
      task.gold_index.reset();
      break;
    }
    case AttackTag::EmptyAnswers:
    case AttackTag::OptionsZero:
      task.options.assign(n, std::string{});
      task.gold_index.reset();
      break;
    case AttackTag::EmptyQuestion:
    case AttackTag::QuestionZero:
      task.question.clear();
      break;
    case AttackTag::EmptyFrames:
    case AttackTag::VideoZero:
      out.directives.frames = "black";
      break;
    case AttackTag::CorrectFrames:
      if (!source.gold_span) {
        throw Error(ErrorCode::MissingTimestamps, "task " + source.task_id + " has no answer timestamps");
      }
      out.directives.frames = "gold-span";
      out.directives.span = source.gold_span;
      break;
    case AttackTag::Rephrased:
      if (!context.rephrase) {
        throw Error(ErrorCode::NoRephraseProvider, "no rephrase provider registered");
      }
      task.question = context.rephrase(source, seed);
      break;
  }
  return out;
}

/// Recovers the source option order from an option-moving result.
inline McqaTask undo_permutation(const AttackedTask& attacked) {
  McqaTask task = attacked.task;
  const auto& perm = attacked.permutation;
  if (perm.empty()) return task;
  std::vector<std::string> original(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) original[perm[i]] = attacked.task.options[i];
  task.options = std::move(original);
  if (task.gold_index) task.gold_index = perm[*task.gold_index];
  return task;
}

struct AttackManifest {
  std::string source_dataset_id;
  AttackKind attack;
  std::uint64_t seed = kDefaultSeed;
  std::vector<AttackedTask> entries;

  friend bool operator==(const AttackManifest&, const AttackManifest&) = default;
};

/// Applies the same attack to every task. Each task draws from its own seed
/// derive_seed(seed, task_id), so results do not depend on dataset order.
inline AttackManifest apply_attack_dataset(std::span<const McqaTask> tasks, const AttackKind& attack,
                                           std::uint64_t seed, const AttackContext& context = {},
                                           std::string source_dataset_id = {}) {
  if (tasks.empty()) throw Error(ErrorCode::InvalidInput, "cannot attack an empty dataset");
  const std::size_t n = tasks.front().option_count();
  std::unordered_set<std::string> seen;
  AttackManifest manifest{std::move(source_dataset_id), attack, seed, {}};
  manifest.entries.reserve(tasks.size());
  for (const auto& task : tasks) {
    if (task.option_count() != n) {
      throw Error(ErrorCode::InconsistentArity, "task " + task.task_id + " has " +
                                                    std::to_string(task.option_count()) + " options, expected " +
                                                    std::to_string(n));
    }
    if (!seen.insert(task.task_id).second) {
      throw Error(ErrorCode::InvalidInput, "duplicate task_id " + task.task_id);
    }
    manifest.entries.push_back(apply_attack(task, attack, derive_seed(seed, task.task_id), context));
  }
  return manifest;
}

}  // namespace bold
