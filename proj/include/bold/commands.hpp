#pragma once

// The command layer behind tools/bold: each cmd_* validates and loads every
// input, computes in memory, then writes its outputs. When a later write fails
// the outputs already written by the same command are removed.

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "bold/attacks.hpp"
#include "bold/calib.hpp"
#include "bold/fixtures.hpp"
#include "bold/io.hpp"
#include "bold/metrics.hpp"
#include "bold/simulate.hpp"
#include "bold/weighted.hpp"

namespace bold::cmd {

namespace fs = std::filesystem;

/// Writes all files or none.
class OutputSet {
 public:
  void add(fs::path path, std::string content) { files_.push_back({std::move(path), std::move(content)}); }

  std::vector<fs::path> commit() {
    std::vector<fs::path> written;
    try {
      for (const auto& [path, content] : files_) {
        io::atomic_write(path, content);
        written.push_back(path);
      }
    } catch (...) {
      for (const auto& p : written) {
        std::error_code ignore;
        fs::remove(p, ignore);
      }
      throw;
    }
    return written;
  }

 private:
  std::vector<std::pair<fs::path, std::string>> files_;
};

inline std::string file_stem_for(const AttackKind& kind) {
  std::string s = kind.name();
  for (char& c : s) {
    if (c == ':') c = '-';
  }
  return s;
}

inline std::size_t uniform_option_count(std::span<const McqaTask> tasks) {
  if (tasks.empty()) throw Error(ErrorCode::InvalidInput, "manifest contains no tasks");
  const std::size_t n = tasks.front().option_count();
  for (const auto& t : tasks) {
    if (t.option_count() != n) {
      throw Error(ErrorCode::InconsistentArity, "task " + t.task_id + " has " + std::to_string(t.option_count()) +
                                                    " options, expected " + std::to_string(n));
    }
  }
  return n;
}

inline GoldMap gold_of(std::span<const McqaTask> tasks) {
  GoldMap gold;
  for (const auto& t : tasks) {
    if (t.gold_index) gold.emplace(t.task_id, *t.gold_index);
  }
  return gold;
}

/// Lists every prediction id absent from the manifest, and every manifest id
/// without a prediction.
inline void check_ids(std::span<const PredictionRecord> preds, std::span<const McqaTask> tasks,
                      const std::string& what) {
  std::unordered_set<std::string> known;
  for (const auto& t : tasks) known.insert(t.task_id);
  std::unordered_set<std::string> seen;
  std::vector<std::string> unknown, duplicate, missing;
  for (const auto& p : preds) {
    if (!known.count(p.task_id)) unknown.push_back(p.task_id);
    if (!seen.insert(p.task_id).second) duplicate.push_back(p.task_id);
  }
  for (const auto& t : tasks) {
    if (!seen.count(t.task_id)) missing.push_back(t.task_id);
  }
  if (unknown.empty() && duplicate.empty() && missing.empty()) return;
  auto join = [](const std::vector<std::string>& ids) {
    std::string s;
    for (const auto& id : ids) s += (s.empty() ? "" : ", ") + id;
    return s;
  };
  std::string msg = what + " does not match the manifest";
  if (!unknown.empty()) msg += "; unknown ids (" + std::to_string(unknown.size()) + "): " + join(unknown);
  if (!duplicate.empty()) msg += "; duplicate ids (" + std::to_string(duplicate.size()) + "): " + join(duplicate);
  if (!missing.empty()) msg += "; ids without prediction (" + std::to_string(missing.size()) + "): " + join(missing);
  throw Error(ErrorCode::IdMismatch, msg);
}

// ---------------------------------------------------------------- text rendering

inline std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

/// "45.88 (↑2.43%)". Higher is better for accuracy-like metrics, lower for
/// the standard deviations.
inline std::string with_delta(double now, std::optional<double> before) {
  std::string s = fmt2(now);
  if (!before) return s;
  auto d = percent_delta(now, *before);
  if (!d) return s + " (n/a)";
  const char* arrow = *d > 0 ? "↑" : (*d < 0 ? "↓" : "=");
  return s + " (" + arrow + fmt2(std::abs(*d)) + "%)";
}

inline std::string render_report(const BiasReport& r, const BiasReport* baseline = nullptr,
                                 const std::string& title = "report") {
  std::ostringstream out;
  auto opt = [&](double BiasReport::*field) -> std::optional<double> {
    if (!baseline) return std::nullopt;
    return baseline->*field;
  };
  out << title << " (" << r.records << " records, " << r.abstained << " abstained)\n";
  out << "  Accuracy    " << with_delta(r.accuracy, opt(&BiasReport::accuracy)) << "\n";
  out << "  F1_mean     " << with_delta(r.f1_mean, opt(&BiasReport::f1_mean)) << "\n";
  out << "  Recall_std  " << with_delta(r.recall_std, opt(&BiasReport::recall_std)) << "\n";
  out << "  F1_std      " << with_delta(r.f1_std, opt(&BiasReport::f1_std)) << "\n";
  out << "  JS_std      " << with_delta(r.js_std, opt(&BiasReport::js_std)) << "\n";
  out << "  votes      ";
  for (std::size_t i = 0; i < r.per_option_counts.size(); ++i) {
    out << " " << option_label(i) << "=" << r.per_option_counts[i];
  }
  out << " N/A=" << r.abstained << "\n";
  return out.str();
}

// ---------------------------------------------------------------- generate

struct GenerateConfig {
  fs::path input;
  std::vector<std::string> settings;
  std::uint64_t seed = kDefaultSeed;
  fs::path out_dir;
  std::string dataset_id;
  AttackContext context;
};

struct GenerateResult {
  std::vector<fs::path> outputs;
  std::size_t tasks = 0;
};

inline GenerateResult cmd_generate(const GenerateConfig& cfg) {
  if (cfg.settings.empty()) throw Error(ErrorCode::InvalidInput, "no --setting given");
  std::vector<AttackKind> kinds;
  for (const auto& s : cfg.settings) kinds.push_back(AttackKind::parse(s));
  const auto source = io::read_manifest(cfg.input);
  const auto tasks = io::tasks_of(source);
  if (tasks.empty()) throw Error(ErrorCode::InvalidInput, cfg.input.string() + " contains no tasks");
  const std::string id = cfg.dataset_id.empty() ? cfg.input.stem().string() : cfg.dataset_id;

  OutputSet outputs;
  for (const auto& kind : kinds) {
    const auto manifest = apply_attack_dataset(tasks, kind, cfg.seed, cfg.context, id);
    outputs.add(cfg.out_dir / (file_stem_for(kind) + ".jsonl"), io::emit_manifest(manifest));
  }
  return {outputs.commit(), tasks.size()};
}

// ---------------------------------------------------------------- metrics

struct MetricsConfig {
  fs::path gold;
  fs::path preds;
  std::optional<fs::path> baseline;
  std::optional<fs::path> out;
  MetricOptions options;
};

struct MetricsResult {
  std::optional<BiasReport> report;  ///< absent when the manifest carries no gold
  std::vector<std::size_t> per_option_counts;
  std::size_t abstained = 0;
  std::string text;
  io::Json json;
};

inline MetricsResult cmd_metrics(const MetricsConfig& cfg) {
  const auto tasks = io::tasks_of(io::read_manifest(cfg.gold));
  const auto preds = io::read_predictions(cfg.preds);
  if (preds.empty()) throw Error(ErrorCode::InvalidInput, cfg.preds.string() + " is an empty prediction log");
  const std::size_t n = uniform_option_count(tasks);
  check_ids(preds, tasks, cfg.preds.string());
  std::optional<BiasReport> baseline;
  if (cfg.baseline) {
    const auto text = io::read_file(*cfg.baseline);
    io::Json bj;
    try {
      bj = io::Json::parse(text);
    } catch (const io::Json::parse_error& e) {
      io::detail::schema_fail(cfg.baseline->string(), std::string("malformed JSON (") + e.what() + ")");
    }
    const io::Json& body = bj.contains("report") ? bj["report"] : bj;
    baseline = io::report_from_json(body, cfg.baseline->string());
  }

  MetricsResult res;
  const GoldMap gold = gold_of(tasks);
  io::Json j;
  j["format"] = "bold-report";
  j["version"] = io::kFormatVersion;
  j["abstentions"] = cfg.options.abstentions == AbstentionPolicy::Exclude ? "exclude" : "count-incorrect";
  if (gold.empty()) {
    // Settings without a correct option: only the vote distribution exists.
    res.per_option_counts.assign(n, 0);
    for (const auto& p : preds) {
      auto c = p.chosen();
      if (!c) {
        ++res.abstained;
        continue;
      }
      if (*c >= n) throw Error(ErrorCode::InconsistentArity, "record " + p.task_id + " choice out of range");
      ++res.per_option_counts[*c];
    }
    j["gold"] = false;
    j["per_option_counts"] = res.per_option_counts;
    j["abstained"] = res.abstained;
    j["records"] = preds.size();
    std::ostringstream text;
    text << "votes (no gold in manifest, " << preds.size() << " records)\n ";
    for (std::size_t i = 0; i < n; ++i) text << " " << option_label(i) << "=" << res.per_option_counts[i];
    text << " N/A=" << res.abstained << "\n";
    res.text = text.str();
  } else {
    if (gold.size() != tasks.size()) {
      throw Error(ErrorCode::MissingGold, "manifest mixes tasks with and without gold");
    }
    const BiasReport report = bias_report(preds, gold, n, cfg.options);
    j["gold"] = true;
    j["report"] = io::to_json(report);
    if (baseline) {
      j["baseline"] = io::to_json(*baseline);
      j["delta_percent"] = io::delta_json(report, *baseline);
    }
    res.per_option_counts = report.per_option_counts;
    res.abstained = report.abstained;
    res.text = render_report(report, baseline ? &*baseline : nullptr, cfg.preds.filename().string());
    res.report = report;
  }
  res.json = j;
  if (cfg.out) {
    OutputSet outputs;
    outputs.add(*cfg.out, j.dump(2) + "\n");
    fs::path txt = *cfg.out;
    txt.replace_extension(".txt");
    outputs.add(txt, res.text);
    outputs.commit();
  }
  return res;
}

// ---------------------------------------------------------------- calibrate

enum class CalibrationMode { Bold, Weighted };

struct CalibrateConfig {
  fs::path dataset;
  fs::path default_log;
  std::array<fs::path, 3> attack_logs;  ///< video-zero, question-zero, options-zero
  double k = kDefaultBudget;
  std::uint64_t seed = kDefaultSeed;
  CalibrationMode mode = CalibrationMode::Bold;
  WeightedOptions weighted;
  fs::path out_dir;
  std::optional<fs::path> trace_csv;
  MetricOptions metrics;
};

struct CalibrateResult {
  PriorEstimate estimate;
  std::vector<PredictionRecord> debiased;
  std::optional<BiasReport> before;
  std::optional<BiasReport> after;
  std::vector<OptimResult> folds;
  std::vector<fs::path> outputs;
  std::string text;
};

inline AttackedObservations load_attacked(const std::array<fs::path, 3>& paths, std::size_t n) {
  AttackedObservations attacked;
  for (std::size_t j = 0; j < paths.size(); ++j) {
    const auto log = io::read_predictions(paths[j]);
    for (const auto& rec : log) {
      if (rec.abstained) continue;
      if (!rec.probs) {
        throw Error(ErrorCode::RequiresDistributions,
                    paths[j].string() + ": record " + rec.task_id + " has no probability vector");
      }
      if (rec.probs->size() != n) {
        throw Error(ErrorCode::InconsistentArity, paths[j].string() + ": record " + rec.task_id + " has " +
                                                      std::to_string(rec.probs->size()) + " probabilities");
      }
      auto& dec = attacked[rec.task_id];
      if (dec.by_attack[j]) throw Error(ErrorCode::InvalidInput, paths[j].string() + ": duplicate id " + rec.task_id);
      dec.by_attack[j] = *rec.probs;
    }
  }
  return attacked;
}

inline CalibrateResult cmd_calibrate(const CalibrateConfig& cfg) {
  if (!(cfg.k > 0.0 && cfg.k <= 1.0)) throw Error(ErrorCode::InvalidInput, "k must lie in (0, 1]");
  const auto tasks = io::tasks_of(io::read_manifest(cfg.dataset));
  const std::size_t n = uniform_option_count(tasks);
  const auto preds = io::read_predictions(cfg.default_log);
  if (preds.empty()) throw Error(ErrorCode::InvalidInput, cfg.default_log.string() + " is an empty prediction log");
  check_ids(preds, tasks, cfg.default_log.string());
  for (const auto& p : preds) {
    if (!p.abstained && !p.probs) {
      throw Error(ErrorCode::RequiresDistributions,
                  cfg.default_log.string() + ": record " + p.task_id + " carries only a hard choice");
    }
    if (p.probs && p.probs->size() != n) {
      throw Error(ErrorCode::InconsistentArity, "record " + p.task_id + " probability length differs from options");
    }
  }
  const auto attacked = load_attacked(cfg.attack_logs, n);
  std::vector<std::string> ids;
  ids.reserve(tasks.size());
  for (const auto& t : tasks) ids.push_back(t.task_id);
  const GoldMap gold = gold_of(tasks);
  const bool has_gold = gold.size() == tasks.size();

  CalibrateResult res;
  if (cfg.mode == CalibrationMode::Bold) {
    res.estimate = estimate_global_prior(ids, attacked, cfg.k, cfg.seed);
    res.debiased = debias_dataset(preds, res.estimate);
  } else {
    if (!has_gold) throw Error(ErrorCode::MissingGold, "weighted calibration needs gold labels for every task");
    auto w = weighted_bold(ids, preds, attacked, gold, n, cfg.k, cfg.seed, cfg.weighted);
    res.estimate = std::move(w.estimate);
    res.debiased = std::move(w.debiased);
    res.folds = std::move(w.folds);
  }

  io::Json report;
  report["format"] = "bold-calibration";
  report["version"] = io::kFormatVersion;
  report["mode"] = cfg.mode == CalibrationMode::Bold ? "bold" : "weighted";
  report["k"] = cfg.k;
  report["seed"] = cfg.seed;
  if (cfg.mode == CalibrationMode::Weighted) {
    report["constraint"] = to_string(cfg.weighted.constraint);
    report["frozen"] = cfg.weighted.frozen.has_value();
  }
  report["prior"] = io::detail::reals(res.estimate.prior.values());
  if (has_gold) {
    res.before = bias_report(preds, gold, n, cfg.metrics);
    res.after = bias_report(res.debiased, gold, n, cfg.metrics);
    report["before"] = io::to_json(*res.before);
    report["after"] = io::to_json(*res.after);
    report["delta_percent"] = io::delta_json(*res.after, *res.before);
    res.text = render_report(*res.before, nullptr, "before") + render_report(*res.after, &*res.before, "after");
  }
  if (!res.folds.empty()) {
    io::Json folds = io::Json::array();
    for (const auto& f : res.folds) folds.push_back(io::to_json(f));
    report["folds"] = std::move(folds);
  }

  OutputSet outputs;
  outputs.add(cfg.out_dir / "debiased.jsonl", io::emit_predictions(res.debiased));
  outputs.add(cfg.out_dir / "prior.json", io::emit_prior(res.estimate));
  outputs.add(cfg.out_dir / "report.json", report.dump(2) + "\n");
  if (cfg.trace_csv) outputs.add(*cfg.trace_csv, io::emit_trace_csv(res.folds));
  res.outputs = outputs.commit();
  return res;
}

// ---------------------------------------------------------------- simulate

struct SimulateConfig {
  SimSpec spec;
  fs::path out_dir;
};

struct SimulateResult {
  std::vector<fs::path> outputs;
  std::size_t tasks = 0;
};

/// Linearly decreasing positional preference, normalized: n, n-1, ..., 1.
inline Distribution default_bias(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<double>(n - i);
  return normalize(w);
}

inline SimulateResult cmd_simulate(const SimulateConfig& cfg) {
  const SimDataset ds = simulate_dataset(cfg.spec);
  OutputSet outputs;
  outputs.add(cfg.out_dir / "dataset.jsonl", io::emit_manifest(io::manifest_of(ds.tasks, "simulated")));
  outputs.add(cfg.out_dir / "default.jsonl", io::emit_predictions(ds.default_preds));
  for (std::size_t j = 0; j < kDecompositions.size(); ++j) {
    outputs.add(cfg.out_dir / (AttackKind::of(kDecompositions[j]).name() + ".jsonl"),
                io::emit_predictions(ds.attack_logs[j]));
  }
  return {outputs.commit(), ds.tasks.size()};
}

// ---------------------------------------------------------------- fixtures

struct FixtureConfig {
  fs::path table;
  std::string setting;
  fs::path out_dir;
};

struct FixtureResult {
  FixtureTable table;
  std::vector<fs::path> outputs;
};

/// Expands one table row into gold.jsonl + preds.jsonl for cmd_metrics.
inline FixtureResult cmd_fixture(const FixtureConfig& cfg) {
  FixtureResult res{load_fixture(cfg.table), {}};
  const auto& row = res.table.row(cfg.setting);
  const auto realized = realize_row(res.table, row);
  std::string id = res.table.model + "/" + res.table.dataset + "/" + row.setting;
  OutputSet outputs;
  outputs.add(cfg.out_dir / "gold.jsonl", io::emit_manifest(io::manifest_of(realized.tasks, id)));
  outputs.add(cfg.out_dir / "preds.jsonl", io::emit_predictions(realized.preds));
  res.outputs = outputs.commit();
  return res;
}

}  // namespace bold::cmd
