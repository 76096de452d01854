#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "run_config.hpp"

namespace tfm::cli {

struct GenerateOptions {
  /// Emit the three-trajectory oscillator benchmark.
  bool benchmark = false;
  /// One custom trajectory per entry.
  std::vector<OscillatorParams> oscillators;
  double noise = 0.0;
  std::uint64_t seed = 0;
  /// CSV path; the manifest is written next to it as <stem>.manifest.json.
  std::filesystem::path out;
};

/// Parses "key=value" tokens (c, k, m, dt, n_steps, x0, v0).
OscillatorParams parse_oscillator_spec(const std::vector<std::string>& tokens);

void cmd_generate(const GenerateOptions& opts, std::ostream& log);

struct TrainOptions {
  /// Empty: the built-in oscillator settings.
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_epochs;
  std::optional<int> steps_per_epoch;
  std::optional<std::filesystem::path> out;
  /// History length 0.
  bool no_memory = false;
  /// Do not feed the condition vector.
  bool no_cond = false;
};

struct TrainOutcome {
  std::filesystem::path run_dir;
  TrainReport report;
  RunConfig config;
};

/// Resolved config with CLI overrides applied and validated.
RunConfig resolve_train_config(const TrainOptions& opts);
/// Writes config.yaml, model.json, one checkpoint per head, train_log.jsonl
/// and train_report.json into the run directory. Throws std::runtime_error
/// after writing the report when training diverged.
TrainOutcome cmd_train(const TrainOptions& opts, std::ostream& log);

struct RolloutOverrides {
  std::optional<DynamicsMode> mode;
  std::optional<int> ensemble;
  std::optional<double> sde_noise;
  std::optional<bool> teacher_forcing;
  std::optional<bool> free_running;
  std::optional<int> n_warmup;
  std::optional<int> substeps;
  std::optional<std::uint64_t> seed;
};

struct EvalOptions {
  std::filesystem::path run_dir;
  /// Empty: the run's configured test data.
  std::filesystem::path data;
  /// Empty: <run_dir>/eval.
  std::filesystem::path out;
  RolloutOverrides rollout;
};

/// Writes metrics.json and predictions.csv (plus ensemble.csv when more than
/// one draw is taken) and returns the metrics document.
nlohmann::json cmd_eval(const EvalOptions& opts, std::ostream& log);

struct PredictOptions {
  std::filesystem::path run_dir;
  std::filesystem::path data;
  std::filesystem::path out;
  RolloutOverrides rollout;
};

/// Prediction table in data units for every trajectory of `data`.
void cmd_predict(const PredictOptions& opts, std::ostream& log);

struct ReproduceOptions {
  std::optional<int> epochs;
  std::optional<int> steps_per_epoch;
  std::uint64_t seed = 0;
  /// Empty: <output root>/reproduce_oscillator.
  std::filesystem::path out;
};

/// Trains history-3, history-0 and history-0-without-condition models on the
/// oscillator benchmark and writes side-by-side predictions plus summary.json.
nlohmann::json cmd_reproduce_oscillator(const ReproduceOptions& opts, std::ostream& log);

}  // namespace tfm::cli
