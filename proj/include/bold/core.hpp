#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bold/config.hpp"
#include "bold/error.hpp"

namespace bold {

/// Probability vector over n >= 2 option positions. Immutable once built;
/// every instance has non-negative entries summing to 1 within
/// kTolerance.validation.
class Distribution {
 public:
  explicit Distribution(std::vector<double> probs) : probs_(std::move(probs)) { validate(); }
  Distribution(std::initializer_list<double> probs) : probs_(probs) { validate(); }

  static Distribution uniform(std::size_t n) {
    return Distribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> values() const noexcept { return probs_; }
  const std::vector<double>& vector() const noexcept { return probs_; }
  auto begin() const noexcept { return probs_.begin(); }
  auto end() const noexcept { return probs_.end(); }

  double min() const { return *std::min_element(probs_.begin(), probs_.end()); }

  friend bool operator==(const Distribution&, const Distribution&) = default;

 private:
  void validate() const {
    if (probs_.size() < 2) {
      throw Error(ErrorCode::InvalidInput, "a distribution needs at least two entries");
    }
    double sum = 0.0;
    for (double p : probs_) {
      if (!std::isfinite(p) || p < 0.0) {
        throw Error(ErrorCode::InvalidInput, "distribution entries must be finite and non-negative");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kTolerance.validation) {
      throw Error(ErrorCode::InvalidInput,
                  "distribution entries sum to " + std::to_string(sum) + ", expected 1");
    }
  }

  std::vector<double> probs_;
};

/// Max-subtracted softmax; entries are strictly positive for any finite input
/// whose spread stays within the double exponent range.
inline Distribution softmax(std::span<const double> logits) {
  if (logits.size() < 2) throw Error(ErrorCode::InvalidInput, "softmax needs at least two logits");
  double top = -INFINITY;
  for (double x : logits) {
    if (!std::isfinite(x)) throw Error(ErrorCode::InvalidInput, "softmax input must be finite");
    top = std::max(top, x);
  }
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return Distribution(std::move(out));
}

inline Distribution softmax(std::initializer_list<double> logits) {
  return softmax(std::span<const double>(logits.begin(), logits.size()));
}

/// Divides non-negative weights by their sum.
inline Distribution normalize(std::span<const double> weights) {
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw Error(ErrorCode::InvalidInput, "normalize expects finite non-negative weights");
    }
    sum += w;
  }
  if (!(sum > 0.0)) throw Error(ErrorCode::DegenerateInput, "cannot normalize an all-zero vector");
  std::vector<double> out(weights.begin(), weights.end());
  for (double& v : out) v /= sum;
  return Distribution(std::move(out));
}

inline Distribution normalize(std::initializer_list<double> weights) {
  return normalize(std::span<const double>(weights.begin(), weights.size()));
}

/// Index of the largest entry; ties go to the lowest index. This is the only
/// tie rule used anywhere in the toolkit.
inline std::size_t argmax_first(const Distribution& d) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < d.size(); ++i) {
    if (d[i] > d[best]) best = i;
  }
  return best;
}

/// Elementwise log(max(p_i, floor)).
inline std::vector<double> safe_log(const Distribution& d, double floor = kTolerance.prob_floor) {
  if (!(floor > 0.0)) throw Error(ErrorCode::InvalidInput, "log floor must be positive");
  std::vector<double> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = std::log(std::max(d[i], floor));
  return out;
}

/// Positional option label at the interface: "a0", "a1", ...
inline std::string option_label(std::size_t i) { return "a" + std::to_string(i); }

/// Closed interval of video seconds carrying the answer evidence.
struct TimeSpan {
  double start = 0.0;
  double end = 0.0;
  friend bool operator==(const TimeSpan&, const TimeSpan&) = default;
};

/// One multiple-choice question. gold_index is absent for settings that have
/// no single correct option.
struct McqaTask {
  std::string task_id;
  std::string video_ref;
  std::string question;
  std::vector<std::string> options;
  std::optional<std::size_t> gold_index;
  std::optional<TimeSpan> gold_span;

  std::size_t option_count() const noexcept { return options.size(); }

  void validate() const {
    if (task_id.empty()) throw Error(ErrorCode::InvalidInput, "task_id must not be empty");
    if (options.empty()) throw Error(ErrorCode::InvalidInput, "task " + task_id + " has no options");
    if (gold_index && *gold_index >= options.size()) {
      throw Error(ErrorCode::InvalidInput, "task " + task_id + " gold index out of range");
    }
  }

  friend bool operator==(const McqaTask&, const McqaTask&) = default;
};

enum class AttackTag {
  Default,
  VideoZero,
  QuestionZero,
  OptionsZero,
  Shuffle,
  CorrectFrames,
  EmptyFrames,
  Rephrased,
  EmptyQuestion,
  CorrectInPosition,
  CorrectInPositionShuffled,
  AddEmptyOption,
  AllIdentical,
  AllCorrect,
  EmptyAnswers,
};

/// Which component was removed from a task, or how the task was modified.
/// `position` is only meaningful for the positional settings.
struct AttackKind {
  AttackTag tag = AttackTag::Default;
  std::size_t position = 0;

  static constexpr AttackKind of(AttackTag tag, std::size_t position = 0) { return {tag, position}; }

  bool has_position() const noexcept {
    return tag == AttackTag::CorrectInPosition || tag == AttackTag::CorrectInPositionShuffled ||
           tag == AttackTag::AllIdentical;
  }

  /// The three ill-defining decompositions accepted by calibration.
  bool is_decomposition() const noexcept {
    return tag == AttackTag::VideoZero || tag == AttackTag::QuestionZero ||
           tag == AttackTag::OptionsZero;
  }

  /// Settings after which no option is singled out as correct.
  bool removes_gold() const noexcept {
    return tag == AttackTag::AllIdentical || tag == AttackTag::AllCorrect ||
           tag == AttackTag::EmptyAnswers || tag == AttackTag::OptionsZero;
  }

  std::string name() const {
    std::string base;
    switch (tag) {
      case AttackTag::Default: base = "default"; break;
      case AttackTag::VideoZero: base = "video-zero"; break;
      case AttackTag::QuestionZero: base = "question-zero"; break;
      case AttackTag::OptionsZero: base = "options-zero"; break;
      case AttackTag::Shuffle: base = "shuffle"; break;
      case AttackTag::CorrectFrames: base = "correct-frames"; break;
      case AttackTag::EmptyFrames: base = "empty-frames"; break;
      case AttackTag::Rephrased: base = "rephrased"; break;
      case AttackTag::EmptyQuestion: base = "empty-question"; break;
      case AttackTag::CorrectInPosition: base = "correct-in"; break;
      case AttackTag::CorrectInPositionShuffled: base = "correct-in-shuffled"; break;
      case AttackTag::AddEmptyOption: base = "add-empty-option"; break;
      case AttackTag::AllIdentical: base = "all-identical"; break;
      case AttackTag::AllCorrect: base = "all-correct"; break;
      case AttackTag::EmptyAnswers: base = "empty-answers"; break;
    }
    if (has_position()) base += ":" + std::to_string(position);
    return base;
  }

  /// Inverse of name(): "shuffle", "correct-in:2", "all-identical:0", ...
  static AttackKind parse(std::string_view text) {
    std::string_view head = text;
    std::optional<std::size_t> pos;
    if (auto colon = text.find(':'); colon != std::string_view::npos) {
      head = text.substr(0, colon);
      const auto digits = text.substr(colon + 1);
      if (digits.empty() || digits.find_first_not_of("0123456789") != std::string_view::npos) {
        throw Error(ErrorCode::InvalidInput, "bad position in setting '" + std::string(text) + "'");
      }
      pos = std::stoul(std::string(digits));
    }
    static constexpr std::pair<std::string_view, AttackTag> kNames[] = {
        {"default", AttackTag::Default},
        {"video-zero", AttackTag::VideoZero},
        {"question-zero", AttackTag::QuestionZero},
        {"options-zero", AttackTag::OptionsZero},
        {"shuffle", AttackTag::Shuffle},
        {"correct-frames", AttackTag::CorrectFrames},
        {"empty-frames", AttackTag::EmptyFrames},
        {"rephrased", AttackTag::Rephrased},
        {"empty-question", AttackTag::EmptyQuestion},
        {"correct-in", AttackTag::CorrectInPosition},
        {"correct-in-shuffled", AttackTag::CorrectInPositionShuffled},
        {"add-empty-option", AttackTag::AddEmptyOption},
        {"all-identical", AttackTag::AllIdentical},
        {"all-correct", AttackTag::AllCorrect},
        {"empty-answers", AttackTag::EmptyAnswers},
    };
    for (const auto& [label, tag] : kNames) {
      if (label != head) continue;
      AttackKind kind{tag, pos.value_or(0)};
      if (kind.has_position() != pos.has_value()) {
        throw Error(ErrorCode::InvalidInput,
                    "setting '" + std::string(text) +
                        (pos ? "' does not take a position" : "' requires a position, e.g. name:0"));
      }
      return kind;
    }
    throw Error(ErrorCode::InvalidInput, "unknown setting '" + std::string(text) + "'");
  }

  friend bool operator==(const AttackKind&, const AttackKind&) = default;
};

/// One model observation for one task under one variant.
struct PredictionRecord {
  std::string task_id;
  AttackKind variant;
  std::optional<Distribution> probs;
  std::optional<std::size_t> choice;
  bool abstained = false;

  /// The option the record votes for, or nullopt for an abstention.
  std::optional<std::size_t> chosen() const {
    if (abstained) return std::nullopt;
    if (choice) return choice;
    if (probs) return argmax_first(*probs);
    return std::nullopt;
  }

  void validate() const {
    if (task_id.empty()) throw Error(ErrorCode::InvalidInput, "prediction without task_id");
    if (abstained) {
      if (choice) throw Error(ErrorCode::InvalidInput, "abstained record " + task_id + " carries a choice");
      return;
    }
    if (!probs && !choice) {
      throw Error(ErrorCode::InvalidInput, "record " + task_id + " has neither probs nor choice");
    }
    if (probs && choice && *choice != argmax_first(*probs)) {
      throw Error(ErrorCode::InvalidInput, "record " + task_id + " choice disagrees with argmax of probs");
    }
    if (probs && choice && *choice >= probs->size()) {
      throw Error(ErrorCode::InvalidInput, "record " + task_id + " choice out of range");
    }
  }

  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

}  // namespace bold
