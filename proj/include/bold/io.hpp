#pragma once

// Wire formats. Manifests and prediction logs are newline-delimited JSON, one
// record per line; priors and reports are single JSON documents. Output is
// deterministic (fixed key order, shortest round-trip doubles) and every file
// is written to a temporary sibling first and renamed into place.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "bold/attacks.hpp"
#include "bold/calib.hpp"
#include "bold/core.hpp"
#include "bold/metrics.hpp"
#include "bold/weighted.hpp"

namespace bold::io {

using Json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

// ---------------------------------------------------------------- files

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidInput, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void atomic_write(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create directory " + path.parent_path().string());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ignore;
      fs::remove(tmp, ignore);
      throw Error(ErrorCode::IoError, "short write to " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignore;
    fs::remove(tmp, ignore);
    throw Error(ErrorCode::IoError, "cannot rename " + tmp.string() + " to " + path.string());
  }
}

// ---------------------------------------------------------------- schema helpers

namespace detail {

[[noreturn]] inline void schema_fail(std::string_view where, const std::string& what) {
  throw Error(ErrorCode::SchemaError, std::string(where) + ": " + what);
}

inline const Json& require(const Json& obj, const char* key, std::string_view where) {
  auto it = obj.find(key);
  if (it == obj.end()) schema_fail(where, std::string("missing field '") + key + "'");
  return *it;
}

inline std::string get_string(const Json& obj, const char* key, std::string_view where) {
  const Json& v = require(obj, key, where);
  if (!v.is_string()) schema_fail(where, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

/// Accepts a non-negative integer or a positional label "aN".
inline std::size_t get_index(const Json& v, const char* key, std::string_view where) {
  if (v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0)) {
    return v.get<std::size_t>();
  }
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s.size() >= 2 && s[0] == 'a' && s.find_first_not_of("0123456789", 1) == std::string::npos) {
      return std::stoul(s.substr(1));
    }
  }
  schema_fail(where, std::string("field '") + key + "' must be an option index or label like \"a0\"");
}

inline std::vector<double> get_reals(const Json& v, const char* key, std::string_view where) {
  if (!v.is_array()) schema_fail(where, std::string("field '") + key + "' must be an array of numbers");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) schema_fail(where, std::string("field '") + key + "' must be an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

inline TimeSpan get_span(const Json& v, const char* key, std::string_view where) {
  const auto s = get_reals(v, key, where);
  if (s.size() != 2 || !(s[0] <= s[1])) schema_fail(where, std::string("field '") + key + "' must be [start, end]");
  return {s[0], s[1]};
}

inline Distribution get_distribution(const Json& v, const char* key, std::string_view where) {
  try {
    return Distribution(get_reals(v, key, where));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SchemaError) throw;
    schema_fail(where, std::string("field '") + key + "': " + e.what());
  }
}

template <typename F>
void for_each_line(std::string_view text, std::string_view name, F&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    const std::string where = std::string(name) + ":" + std::to_string(line_no);
    Json record;
    try {
      record = Json::parse(line);
    } catch (const Json::parse_error& e) {
      schema_fail(where, std::string("malformed JSON (") + e.what() + ")");
    }
    if (!record.is_object()) schema_fail(where, "record must be a JSON object");
    fn(record, where);
  }
}

inline Json reals(std::span<const double> v) { return Json(std::vector<double>(v.begin(), v.end())); }

}  // namespace detail

// ---------------------------------------------------------------- tasks and manifests

inline Json to_json(const AttackedTask& entry) {
  const McqaTask& t = entry.task;
  Json j;
  j["task_id"] = t.task_id;
  j["video_ref"] = t.video_ref;
  j["question"] = t.question;
  j["options"] = t.options;
  if (t.gold_index) j["gold_index"] = *t.gold_index;
  if (t.gold_span) j["gold_span"] = {t.gold_span->start, t.gold_span->end};
  if (!entry.directives.empty()) {
    Json d = Json::object();
    if (entry.directives.frames) d["frames"] = *entry.directives.frames;
    if (entry.directives.span) d["span"] = {entry.directives.span->start, entry.directives.span->end};
    j["directives"] = std::move(d);
  }
  if (!entry.permutation.empty()) j["permutation"] = entry.permutation;
  return j;
}

inline AttackedTask task_from_json(const Json& j, std::string_view where) {
  AttackedTask entry;
  McqaTask& t = entry.task;
  t.task_id = detail::get_string(j, "task_id", where);
  if (t.task_id.empty()) detail::schema_fail(where, "task_id must not be empty");
  if (j.contains("video_ref")) t.video_ref = detail::get_string(j, "video_ref", where);
  t.question = detail::get_string(j, "question", where);
  const Json& opts = detail::require(j, "options", where);
  if (!opts.is_array() || opts.empty()) detail::schema_fail(where, "field 'options' must be a non-empty array");
  for (const auto& o : opts) {
    if (!o.is_string()) detail::schema_fail(where, "option texts must be strings");
    t.options.push_back(o.get<std::string>());
  }
  if (auto it = j.find("gold_index"); it != j.end() && !it->is_null()) {
    t.gold_index = detail::get_index(*it, "gold_index", where);
    if (*t.gold_index >= t.options.size()) detail::schema_fail(where, "gold_index out of range");
  }
  if (auto it = j.find("gold_span"); it != j.end() && !it->is_null()) {
    t.gold_span = detail::get_span(*it, "gold_span", where);
  }
  if (auto it = j.find("directives"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) detail::schema_fail(where, "field 'directives' must be an object");
    if (it->contains("frames")) entry.directives.frames = detail::get_string(*it, "frames", where);
    if (auto s = it->find("span"); s != it->end()) entry.directives.span = detail::get_span(*s, "span", where);
  }
  if (auto it = j.find("permutation"); it != j.end()) {
    if (!it->is_array()) detail::schema_fail(where, "field 'permutation' must be an array");
    for (const auto& p : *it) entry.permutation.push_back(detail::get_index(p, "permutation", where));
    if (entry.permutation.size() != t.options.size()) {
      detail::schema_fail(where, "permutation length differs from option count");
    }
  }
  return entry;
}

inline std::string emit_manifest(const AttackManifest& manifest) {
  std::string out;
  Json header;
  header["manifest"] = {{"source_dataset_id", manifest.source_dataset_id},
                        {"attack", manifest.attack.name()},
                        {"seed", manifest.seed},
                        {"version", kFormatVersion}};
  out += header.dump() + "\n";
  for (const auto& e : manifest.entries) out += to_json(e).dump() + "\n";
  return out;
}

/// Source tasks carry no header; the attack then reads as "default".
inline AttackManifest parse_manifest(std::string_view text, std::string_view name) {
  AttackManifest manifest;
  std::unordered_set<std::string> seen;
  bool first = true;
  detail::for_each_line(text, name, [&](const Json& j, const std::string& where) {
    if (auto it = j.find("manifest"); it != j.end()) {
      if (!first) detail::schema_fail(where, "manifest header must be the first record");
      if (!it->is_object()) detail::schema_fail(where, "manifest header must be an object");
      if (it->contains("source_dataset_id")) {
        manifest.source_dataset_id = detail::get_string(*it, "source_dataset_id", where);
      }
      if (it->contains("attack")) {
        try {
          manifest.attack = AttackKind::parse(detail::get_string(*it, "attack", where));
        } catch (const Error& e) {
          if (e.code() == ErrorCode::SchemaError) throw;
          detail::schema_fail(where, e.what());
        }
      }
      if (auto s = it->find("seed"); s != it->end()) {
        if (!s->is_number_unsigned()) detail::schema_fail(where, "seed must be an unsigned integer");
        manifest.seed = s->get<std::uint64_t>();
      }
      first = false;
      return;
    }
    first = false;
    auto entry = task_from_json(j, where);
    if (!seen.insert(entry.task.task_id).second) {
      detail::schema_fail(where, "duplicate task_id " + entry.task.task_id);
    }
    manifest.entries.push_back(std::move(entry));
  });
  return manifest;
}

inline AttackManifest read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.string());
}

inline std::vector<McqaTask> tasks_of(const AttackManifest& manifest) {
  std::vector<McqaTask> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) out.push_back(e.task);
  return out;
}

inline AttackManifest manifest_of(std::span<const McqaTask> tasks, std::string source_dataset_id = {}) {
  AttackManifest m;
  m.source_dataset_id = std::move(source_dataset_id);
  for (const auto& t : tasks) m.entries.push_back(AttackedTask{t, {}, {}});
  return m;
}

// ---------------------------------------------------------------- predictions

inline Json to_json(const PredictionRecord& rec) {
  Json j;
  j["task_id"] = rec.task_id;
  j["variant"] = rec.variant.name();
  if (rec.probs) j["probs"] = detail::reals(rec.probs->values());
  if (rec.choice) j["choice"] = *rec.choice;
  j["abstained"] = rec.abstained;
  return j;
}

inline PredictionRecord prediction_from_json(const Json& j, std::string_view where) {
  PredictionRecord rec;
  rec.task_id = detail::get_string(j, "task_id", where);
  if (auto it = j.find("variant"); it != j.end()) {
    if (!it->is_string()) detail::schema_fail(where, "field 'variant' must be a string");
    try {
      rec.variant = AttackKind::parse(it->get<std::string>());
    } catch (const Error& e) {
      detail::schema_fail(where, e.what());
    }
  }
  if (auto it = j.find("probs"); it != j.end() && !it->is_null()) rec.probs = detail::get_distribution(*it, "probs", where);
  if (auto it = j.find("choice"); it != j.end() && !it->is_null()) rec.choice = detail::get_index(*it, "choice", where);
  if (auto it = j.find("abstained"); it != j.end()) {
    if (!it->is_boolean()) detail::schema_fail(where, "field 'abstained' must be a boolean");
    rec.abstained = it->get<bool>();
  }
  try {
    rec.validate();
  } catch (const Error& e) {
    detail::schema_fail(where, e.what());
  }
  return rec;
}

inline std::string emit_predictions(std::span<const PredictionRecord> preds) {
  std::string out;
  for (const auto& r : preds) out += to_json(r).dump() + "\n";
  return out;
}

inline std::vector<PredictionRecord> parse_predictions(std::string_view text, std::string_view name) {
  std::vector<PredictionRecord> out;
  detail::for_each_line(text, name, [&](const Json& j, const std::string& where) {
    out.push_back(prediction_from_json(j, where));
  });
  return out;
}

inline std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  return parse_predictions(read_file(path), path.string());
}

// ---------------------------------------------------------------- priors

inline Json to_json(const PriorEstimate& est) {
  Json j;
  j["format"] = "bold-prior";
  j["version"] = kFormatVersion;
  j["n"] = est.n();
  j["k"] = est.k;
  j["seed"] = est.seed;
  j["weights"] = detail::reals(est.weights);
  j["prior"] = detail::reals(est.prior.values());
  j["sample_ids"] = est.sample_ids;
  return j;
}

inline PriorEstimate prior_from_json(const Json& j, std::string_view where) {
  if (!j.is_object()) detail::schema_fail(where, "prior must be a JSON object");
  if (detail::get_string(j, "format", where) != "bold-prior") detail::schema_fail(where, "not a prior document");
  PriorEstimate est;
  est.prior = detail::get_distribution(detail::require(j, "prior", where), "prior", where);
  const Json& n = detail::require(j, "n", where);
  if (!n.is_number_unsigned() || n.get<std::size_t>() != est.prior.size()) {
    detail::schema_fail(where, "field 'n' must equal the prior length");
  }
  const Json& k = detail::require(j, "k", where);
  if (!k.is_number()) detail::schema_fail(where, "field 'k' must be a number");
  est.k = k.get<double>();
  const Json& seed = detail::require(j, "seed", where);
  if (!seed.is_number_unsigned()) detail::schema_fail(where, "field 'seed' must be an unsigned integer");
  est.seed = seed.get<std::uint64_t>();
  const auto w = detail::get_reals(detail::require(j, "weights", where), "weights", where);
  if (w.size() != 3) detail::schema_fail(where, "field 'weights' must have three entries");
  est.weights = {w[0], w[1], w[2]};
  const Json& ids = detail::require(j, "sample_ids", where);
  if (!ids.is_array()) detail::schema_fail(where, "field 'sample_ids' must be an array");
  for (const auto& id : ids) {
    if (!id.is_string()) detail::schema_fail(where, "sample ids must be strings");
    est.sample_ids.push_back(id.get<std::string>());
  }
  return est;
}

inline std::string emit_prior(const PriorEstimate& est) { return to_json(est).dump(2) + "\n"; }

inline PriorEstimate parse_prior(std::string_view text, std::string_view name) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    detail::schema_fail(name, std::string("malformed JSON (") + e.what() + ")");
  }
  return prior_from_json(j, name);
}

// ---------------------------------------------------------------- reports

inline Json to_json(const BiasReport& r) {
  Json j;
  j["accuracy"] = r.accuracy;
  j["f1_mean"] = r.f1_mean;
  j["recall_std"] = r.recall_std;
  j["f1_std"] = r.f1_std;
  j["js_std"] = r.js_std;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < r.per_option_counts.size(); ++i) labels.push_back(option_label(i));
  j["options"] = labels;
  j["per_option_counts"] = r.per_option_counts;
  j["per_option_recall"] = r.per_option_recall;
  j["per_option_f1"] = r.per_option_f1;
  j["abstained"] = r.abstained;
  j["records"] = r.records;
  j["correct"] = r.correct;
  return j;
}

inline BiasReport report_from_json(const Json& j, std::string_view where) {
  if (!j.is_object()) detail::schema_fail(where, "report must be a JSON object");
  auto real = [&](const char* key) {
    const Json& v = detail::require(j, key, where);
    if (!v.is_number()) detail::schema_fail(where, std::string("field '") + key + "' must be a number");
    return v.get<double>();
  };
  auto count = [&](const char* key) {
    const Json& v = detail::require(j, key, where);
    if (!v.is_number_unsigned()) detail::schema_fail(where, std::string("field '") + key + "' must be a count");
    return v.get<std::size_t>();
  };
  BiasReport r;
  r.accuracy = real("accuracy");
  r.f1_mean = real("f1_mean");
  r.recall_std = real("recall_std");
  r.f1_std = real("f1_std");
  r.js_std = real("js_std");
  const Json& counts = detail::require(j, "per_option_counts", where);
  if (!counts.is_array()) detail::schema_fail(where, "field 'per_option_counts' must be an array");
  for (const auto& c : counts) {
    if (!c.is_number_unsigned()) detail::schema_fail(where, "per-option counts must be non-negative integers");
    r.per_option_counts.push_back(c.get<std::size_t>());
  }
  r.per_option_recall = detail::get_reals(detail::require(j, "per_option_recall", where), "per_option_recall", where);
  r.per_option_f1 = detail::get_reals(detail::require(j, "per_option_f1", where), "per_option_f1", where);
  r.abstained = count("abstained");
  r.records = count("records");
  r.correct = count("correct");
  return r;
}

/// Relative changes 100*(new-old)/old per headline metric; null where old is 0.
inline Json delta_json(const BiasReport& updated, const BiasReport& baseline) {
  auto d = [](double a, double b) -> Json {
    auto v = percent_delta(a, b);
    return v ? Json(*v) : Json(nullptr);
  };
  Json j;
  j["accuracy"] = d(updated.accuracy, baseline.accuracy);
  j["f1_mean"] = d(updated.f1_mean, baseline.f1_mean);
  j["recall_std"] = d(updated.recall_std, baseline.recall_std);
  j["f1_std"] = d(updated.f1_std, baseline.f1_std);
  j["js_std"] = d(updated.js_std, baseline.js_std);
  return j;
}

inline Json to_json(const OptimResult& r) {
  Json j;
  j["weights"] = detail::reals(r.weights);
  j["objective_value"] = r.objective_value;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["status"] = to_string(r.status);
  j["fold_prior"] = detail::reals(r.fold_prior.values());
  j["monitor"] = to_json(r.monitor);
  return j;
}

/// Solver trace rows: fold, eval index, x..., objective, max violation.
inline std::string emit_trace_csv(std::span<const OptimResult> folds) {
  std::ostringstream out;
  out.precision(17);
  out << "fold,eval,w0,w1,w2,objective,max_violation\n";
  for (std::size_t f = 0; f < folds.size(); ++f) {
    for (const auto& e : folds[f].trace) {
      out << f << ',' << e.index;
      for (double v : e.x) out << ',' << v;
      out << ',' << e.objective << ',' << e.max_violation << '\n';
    }
  }
  return out.str();
}

}  // namespace bold::io
