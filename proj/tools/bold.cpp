// bold: attack generation, bias metrics, calibration and simulation over
// jsonl manifests and prediction logs.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "bold/bold.hpp"

namespace {

std::vector<double> parse_reals(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw bold::Error(bold::ErrorCode::InvalidInput, flag + ": '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw bold::Error(bold::ErrorCode::InvalidInput, flag + " is empty");
  return out;
}

// Values that already sum to one are kept verbatim; anything else is rescaled.
bold::Distribution as_distribution(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  if (std::abs(sum - 1.0) <= bold::kTolerance.validation) {
    try {
      return bold::Distribution(v);
    } catch (const bold::Error&) {
    }
  }
  return bold::normalize(v);
}

bold::AbstentionPolicy parse_abstentions(const std::string& s) {
  if (s == "count") return bold::AbstentionPolicy::CountIncorrect;
  if (s == "exclude") return bold::AbstentionPolicy::Exclude;
  throw bold::Error(bold::ErrorCode::InvalidInput, "--abstentions must be 'count' or 'exclude'");
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("bold");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("BOLD_LOG_LEVEL")) {
    auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only honor names it really knows.
    if (level != spdlog::level::off || std::string(env) == "off") spdlog::set_level(level);
  }
}

void log_outputs(const std::vector<std::filesystem::path>& paths) {
  for (const auto& p : paths) spdlog::info("wrote {}", p.string());
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Positional selection bias toolkit for multiple-choice QA"};
  app.require_subcommand(1);

  // generate
  bold::cmd::GenerateConfig gen;
  std::string gen_seed_text;
  auto* generate = app.add_subcommand("generate", "Apply dataset modifications to a manifest");
  generate->add_option("--input", gen.input, "Source manifest (jsonl)")->required();
  generate->add_option("--setting", gen.settings, "Setting name, repeatable (e.g. shuffle, correct-in:0)")
      ->required();
  generate->add_option("--seed", gen.seed, "Run seed")->capture_default_str();
  generate->add_option("--out-dir", gen.out_dir, "Output directory")->required();
  generate->add_option("--dataset-id", gen.dataset_id, "Source dataset id recorded in the output header");

  // metrics
  bold::cmd::MetricsConfig met;
  std::string met_abst = "count";
  std::string met_baseline, met_out;
  auto* metrics = app.add_subcommand("metrics", "Accuracy and positional bias metrics of a prediction log");
  metrics->add_option("--gold", met.gold, "Manifest carrying gold labels")->required();
  metrics->add_option("--preds", met.preds, "Prediction log (jsonl)")->required();
  metrics->add_option("--baseline", met_baseline, "Earlier report.json to compute percentage deltas against");
  metrics->add_option("--abstentions", met_abst, "count (as incorrect) or exclude")->capture_default_str();
  metrics->add_option("--out", met_out, "Write the machine-readable report here (plus a .txt rendering)");

  // calibrate
  bold::cmd::CalibrateConfig cal;
  std::string cal_mode = "bold", cal_constraint = "positive", cal_freeze, cal_trace, cal_abst = "count";
  auto* calibrate = app.add_subcommand("calibrate", "Estimate the global prior and debias a prediction log");
  calibrate->add_option("--dataset", cal.dataset, "Manifest of the evaluated tasks")->required();
  calibrate->add_option("--default", cal.default_log, "Prediction log on unmodified tasks")->required();
  calibrate->add_option("--video-zero", cal.attack_logs[0], "Log with the video removed")->required();
  calibrate->add_option("--question-zero", cal.attack_logs[1], "Log with the question removed")->required();
  calibrate->add_option("--options-zero", cal.attack_logs[2], "Log with the option texts removed")->required();
  calibrate->add_option("--k", cal.k, "Fraction of tasks used for prior estimation")->capture_default_str();
  calibrate->add_option("--seed", cal.seed, "Run seed")->capture_default_str();
  calibrate->add_option("--mode", cal_mode, "bold or weighted")->capture_default_str();
  calibrate->add_option("--constraint", cal_constraint, "Weight box for weighted mode: positive or abs")
      ->capture_default_str();
  calibrate->add_option("--freeze-weights", cal_freeze, "Skip the optimizer and use w0,w1,w2");
  calibrate->add_option("--max-evals", cal.weighted.solver.max_evals, "Objective evaluations per fold")
      ->capture_default_str();
  calibrate->add_option("--trace", cal_trace, "Write the per-evaluation optimizer trace (csv)");
  calibrate->add_option("--abstentions", cal_abst, "count (as incorrect) or exclude")->capture_default_str();
  calibrate->add_option("--out-dir", cal.out_dir, "Output directory")->required();

  // simulate
  bold::cmd::SimulateConfig sim;
  std::string sim_bias, sim_balance, sim_placement = "drawn";
  auto* simulate = app.add_subcommand("simulate", "Write a synthetic biased dataset and its prediction logs");
  simulate->add_option("--n-tasks", sim.spec.n_tasks, "Number of tasks")->capture_default_str();
  simulate->add_option("--n-options", sim.spec.n_options, "Options per task")->capture_default_str();
  simulate->add_option("--competence", sim.spec.competence, "Content mass on the gold option")
      ->capture_default_str();
  simulate->add_option("--bias", sim_bias, "Planted positional bias, comma separated (default: linear decreasing)");
  simulate->add_option("--gold-balance", sim_balance, "Gold position distribution (default: uniform)");
  simulate->add_option("--noise", sim.spec.noise_scale, "Per-task jitter of the bias")->capture_default_str();
  simulate->add_option("--seed", sim.spec.seed, "Run seed")->capture_default_str();
  simulate->add_option("--placement", sim_placement, "drawn or cycle")->capture_default_str();
  simulate->add_option("--out-dir", sim.out_dir, "Output directory")->required();

  // fixture
  bold::cmd::FixtureConfig fix;
  auto* fixture = app.add_subcommand("fixture", "Expand a published count table row into a manifest and a log");
  fixture->add_option("--table", fix.table, "Fixture table (json)")->required();
  fixture->add_option("--setting", fix.setting, "Row label, e.g. \"Default\"")->required();
  fixture->add_option("--out-dir", fix.out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (generate->parsed()) {
      auto res = bold::cmd::cmd_generate(gen);
      spdlog::info("{} tasks, {} settings", res.tasks, gen.settings.size());
      log_outputs(res.outputs);
    } else if (metrics->parsed()) {
      met.options.abstentions = parse_abstentions(met_abst);
      if (!met_baseline.empty()) met.baseline = met_baseline;
      if (!met_out.empty()) met.out = met_out;
      auto res = bold::cmd::cmd_metrics(met);
      std::cout << res.text;
      if (met.out) spdlog::info("wrote {}", met.out->string());
    } else if (calibrate->parsed()) {
      if (cal_mode == "bold") {
        cal.mode = bold::cmd::CalibrationMode::Bold;
      } else if (cal_mode == "weighted") {
        cal.mode = bold::cmd::CalibrationMode::Weighted;
      } else {
        throw bold::Error(bold::ErrorCode::InvalidInput, "--mode must be 'bold' or 'weighted'");
      }
      cal.weighted.constraint = bold::parse_constraint_mode(cal_constraint);
      cal.metrics.abstentions = parse_abstentions(cal_abst);
      cal.weighted.metrics = cal.metrics;
      if (!cal_freeze.empty()) {
        auto w = parse_reals(cal_freeze, "--freeze-weights");
        if (w.size() != 3) throw bold::Error(bold::ErrorCode::InvalidInput, "--freeze-weights needs three values");
        cal.weighted.frozen = bold::Weights{w[0], w[1], w[2]};
      }
      if (!cal_trace.empty()) cal.trace_csv = cal_trace;
      auto res = bold::cmd::cmd_calibrate(cal);
      const auto& p = res.estimate.prior.values();
      std::string prior;
      for (double v : p) prior += (prior.empty() ? "" : ", ") + fmt::format("{:.6f}", v);
      spdlog::info("prior [{}] from {} tasks", prior, res.estimate.sample_ids.size());
      for (std::size_t f = 0; f < res.folds.size(); ++f) {
        const auto& r = res.folds[f];
        spdlog::debug("fold {}: w=[{:.4f}, {:.4f}, {:.4f}] recall_std={:.4f} evals={} status={}", f, r.weights[0],
                      r.weights[1], r.weights[2], r.objective_value, r.iterations, bold::to_string(r.status));
        if (!r.converged) spdlog::warn("fold {} stopped before convergence ({})", f, bold::to_string(r.status));
      }
      std::cout << res.text;
      log_outputs(res.outputs);
    } else if (simulate->parsed()) {
      const std::size_t n = sim.spec.n_options;
      sim.spec.planted_bias =
          sim_bias.empty() ? bold::cmd::default_bias(n) : as_distribution(parse_reals(sim_bias, "--bias"));
      sim.spec.gold_balance = sim_balance.empty() ? bold::Distribution::uniform(n)
                                                  : as_distribution(parse_reals(sim_balance, "--gold-balance"));
      if (sim_placement == "drawn") {
        sim.spec.placement = bold::GoldPlacement::Drawn;
      } else if (sim_placement == "cycle") {
        sim.spec.placement = bold::GoldPlacement::Cycle;
      } else {
        throw bold::Error(bold::ErrorCode::InvalidInput, "--placement must be 'drawn' or 'cycle'");
      }
      auto res = bold::cmd::cmd_simulate(sim);
      spdlog::info("{} tasks", res.tasks);
      log_outputs(res.outputs);
    } else if (fixture->parsed()) {
      auto res = bold::cmd::cmd_fixture(fix);
      spdlog::info("{} / {} / {}", res.table.model, res.table.dataset, fix.setting);
      log_outputs(res.outputs);
    }
  } catch (const bold::Error& e) {
    spdlog::error("{}", e.what());
    return bold::exit_code_for(e.code());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
