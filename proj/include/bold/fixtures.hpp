#pragma once

// Published per-option count tables and their expansion into concrete
// prediction logs. A table row only gives marginals (votes per option, N/A,
// number correct), so realize_row builds one log that has exactly those
// marginals; it is not the original model output.

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "bold/core.hpp"
#include "bold/io.hpp"

namespace bold {

/// QA pairs per dataset, used to check every row's counts.
inline std::optional<std::size_t> dataset_total(const std::string& dataset) {
  static const std::map<std::string, std::size_t> kTotals = {
      {"NExT-QA", 8564}, {"NExT-GQA", 4962}, {"STAR", 7098}, {"Perception Test", 7656}, {"Video-MME", 2700}};
  auto it = kTotals.find(dataset);
  if (it == kTotals.end()) return std::nullopt;
  return it->second;
}

struct FixtureRow {
  std::string setting;
  std::optional<std::string> subset;  ///< e.g. NExT-GQA rows in a NExT-QA table
  std::vector<std::size_t> counts;    ///< n entries, or n+1 with an added empty option
  std::optional<std::size_t> na;      ///< absent when the table has no N/A column
  std::optional<std::size_t> correct;
  std::optional<double> accuracy;

  bool is_target() const { return setting == "Target"; }
  bool has_gold() const { return correct.has_value(); }
  std::size_t abstained() const { return na.value_or(0); }
  std::size_t answered() const {
    std::size_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
  std::size_t total() const { return answered() + abstained(); }
};

struct FixtureTable {
  std::string model;
  std::string dataset;
  std::size_t n_options = 0;
  std::vector<FixtureRow> rows;

  const FixtureRow& row(const std::string& setting) const {
    for (const auto& r : rows) {
      if (r.setting == setting) return r;
    }
    throw Error(ErrorCode::InvalidInput, model + "/" + dataset + " has no row '" + setting + "'");
  }
};

/// Maps a table row label to the setting it reports.
inline std::optional<AttackKind> setting_of(const std::string& label) {
  static const std::map<std::string, AttackTag> kPlain = {
      {"Default", AttackTag::Default},
      {"Answer Shuffling", AttackTag::Shuffle},
      {"Correct Frames", AttackTag::CorrectFrames},
      {"Rephrased Questions", AttackTag::Rephrased},
      {"Additional Empty Option", AttackTag::AddEmptyOption},
      {"All Correct Answers", AttackTag::AllCorrect},
      {"Empty Frames", AttackTag::EmptyFrames},
      {"Empty Questions", AttackTag::EmptyQuestion},
      {"Empty Answers", AttackTag::EmptyAnswers},
  };
  if (auto it = kPlain.find(label); it != kPlain.end()) return AttackKind::of(it->second);
  static const std::regex kAll(R"(All a(\d+))");
  static const std::regex kCorrect(R"(Correct a(\d+)( Shuffled)?)");
  std::smatch m;
  if (std::regex_match(label, m, kAll)) return AttackKind::of(AttackTag::AllIdentical, std::stoul(m[1].str()));
  if (std::regex_match(label, m, kCorrect)) {
    const auto tag = m[2].matched ? AttackTag::CorrectInPositionShuffled : AttackTag::CorrectInPosition;
    return AttackKind::of(tag, std::stoul(m[1].str()));
  }
  return std::nullopt;
}

inline FixtureTable parse_fixture(std::string_view text, std::string_view name) {
  using io::Json;
  using io::detail::schema_fail;
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    schema_fail(name, std::string("malformed JSON (") + e.what() + ")");
  }
  FixtureTable t;
  t.model = io::detail::get_string(j, "model", name);
  t.dataset = io::detail::get_string(j, "dataset", name);
  const Json& n = io::detail::require(j, "options", name);
  if (!n.is_number_unsigned() || n.get<std::size_t>() < 2) schema_fail(name, "options must be an integer >= 2");
  t.n_options = n.get<std::size_t>();
  const Json& rows = io::detail::require(j, "rows", name);
  if (!rows.is_array()) schema_fail(name, "rows must be an array");
  for (const auto& r : rows) {
    FixtureRow row;
    row.setting = io::detail::get_string(r, "setting", name);
    const std::string where = std::string(name) + " [" + row.setting + "]";
    if (r.contains("subset")) row.subset = io::detail::get_string(r, "subset", where);
    for (const auto& c : io::detail::require(r, "counts", where)) {
      if (c.is_null()) continue;
      if (!c.is_number_unsigned()) schema_fail(where, "counts must be non-negative integers or null");
      row.counts.push_back(c.get<std::size_t>());
    }
    const bool extra = row.setting == "Additional Empty Option";
    if (row.counts.size() != t.n_options + (extra ? 1 : 0)) schema_fail(where, "wrong number of option counts");
    if (auto it = r.find("na"); it != r.end() && !it->is_null()) row.na = it->get<std::size_t>();
    if (auto it = r.find("correct"); it != r.end() && !it->is_null()) row.correct = it->get<std::size_t>();
    if (auto it = r.find("accuracy"); it != r.end() && !it->is_null()) row.accuracy = it->get<double>();
    if (row.correct.has_value() != row.accuracy.has_value()) {
      schema_fail(where, "correct and accuracy must be given together");
    }
    if (!row.is_target() && !setting_of(row.setting)) schema_fail(where, "unknown setting");

    const auto total = dataset_total(row.subset.value_or(t.dataset));
    if (!total) schema_fail(where, "unknown dataset " + row.subset.value_or(t.dataset));
    if (row.total() != *total) {
      schema_fail(where, "counts plus N/A sum to " + std::to_string(row.total()) + ", expected " +
                             std::to_string(*total));
    }
    if (row.correct && *row.correct > row.answered()) schema_fail(where, "more correct answers than answers");
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline FixtureTable load_fixture(const std::filesystem::path& path) {
  return parse_fixture(io::read_file(path), path.string());
}

struct RealizedRow {
  std::vector<McqaTask> tasks;  ///< gold absent for rows without a correct count
  std::vector<PredictionRecord> preds;
  std::size_t n_options = 0;
};

/// Builds a log with the row's exact marginals. For "Correct aJ" rows every
/// gold sits at J. Otherwise correct answers are spread over the gold-capable
/// options in proportion to their vote counts, a correct vote gets gold equal
/// to its choice, a wrong vote gets the next option, and abstentions get
/// gold 0.
inline RealizedRow realize_row(const FixtureTable& table, const FixtureRow& row) {
  if (row.is_target()) throw Error(ErrorCode::InvalidInput, "the Target row holds gold counts, not predictions");
  const AttackKind kind = *setting_of(row.setting);
  const std::size_t n = row.counts.size();
  const std::size_t n_gold = table.n_options;  // the added empty option is never gold

  std::vector<std::size_t> hits(n, 0);
  std::optional<std::size_t> fixed_gold;
  if (row.has_gold()) {
    if (kind.tag == AttackTag::CorrectInPosition || kind.tag == AttackTag::CorrectInPositionShuffled) {
      fixed_gold = kind.position;
      if (*row.correct != row.counts[kind.position]) {
        throw Error(ErrorCode::InvalidInput, row.setting + ": correct count differs from votes for the fixed gold");
      }
      hits[kind.position] = *row.correct;
    } else {
      std::size_t capable = 0;
      for (std::size_t i = 0; i < n_gold; ++i) capable += row.counts[i];
      std::size_t assigned = 0;
      for (std::size_t i = 0; i < n_gold; ++i) {
        hits[i] = capable ? (*row.correct * row.counts[i]) / capable : 0;
        assigned += hits[i];
      }
      for (std::size_t i = 0; assigned < *row.correct; i = (i + 1) % n_gold) {
        if (hits[i] < row.counts[i]) {
          ++hits[i];
          ++assigned;
        }
      }
    }
  }

  RealizedRow out;
  out.n_options = n;
  std::size_t seq = 0;
  auto add = [&](std::optional<std::size_t> choice, std::optional<std::size_t> gold) {
    char id[32];
    std::snprintf(id, sizeof id, "q%05zu", seq++);
    McqaTask task;
    task.task_id = id;
    task.video_ref = table.dataset;
    task.question = row.setting;
    for (std::size_t i = 0; i < n; ++i) task.options.push_back(option_label(i));
    task.gold_index = gold;
    out.tasks.push_back(std::move(task));
    PredictionRecord rec;
    rec.task_id = id;
    rec.variant = kind;
    rec.choice = choice;
    rec.abstained = !choice.has_value();
    out.preds.push_back(std::move(rec));
  };

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < row.counts[i]; ++c) {
      std::optional<std::size_t> gold;
      if (row.has_gold()) {
        if (fixed_gold) {
          gold = *fixed_gold;
        } else {
          gold = c < hits[i] ? i : (i + 1) % n_gold;
        }
      }
      add(i, gold);
    }
  }
  for (std::size_t a = 0; a < row.abstained(); ++a) {
    add(std::nullopt, row.has_gold() ? std::optional<std::size_t>(fixed_gold.value_or(0)) : std::nullopt);
  }
  return out;
}

}  // namespace bold
