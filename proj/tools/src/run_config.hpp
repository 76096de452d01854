#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfm/model.hpp"
#include "tfm/rollout.hpp"
#include "tfm/trainer.hpp"

namespace tfm::cli {

/// Bad flags, bad config values or unusable inputs. Maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataSource {
  /// "oscillator" or empty when CSV paths are used.
  std::string benchmark;
  std::filesystem::path train_csv;
  /// Empty: validate on the training data.
  std::filesystem::path val_csv;
  /// Empty: evaluate on the training data.
  std::filesystem::path test_csv;
  /// Std of Gaussian noise added to generated benchmark states.
  double noise = 0.0;
};

/// Everything a run needs. Dimensions inside `model` are filled in from the
/// data when training starts.
struct RunConfig {
  DataSource data;
  ModelConfig model;
  TrainConfig train;
  RolloutConfig rollout;
  /// Rollout draws per trajectory when evaluating an SDE model.
  int ensemble = 32;
  std::filesystem::path output_dir = "run";
  std::uint64_t seed = 0;
};

/// Copies the root seed into every seeded component.
void propagate_seed(RunConfig& cfg);

/// Parses the sectioned YAML layout written by dump_run_config. Missing keys
/// keep their defaults; unknown keys are errors.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& cfg);

/// Every problem found, not just the first.
std::vector<std::string> validation_errors(const RunConfig& cfg);
/// Throws UsageError listing validation_errors.
void validate(const RunConfig& cfg);

/// FNV-1a of the canonical dump without output_dir, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

/// $TFM_OUTPUT_ROOT, or "runs".
std::filesystem::path output_root();
/// Relative paths are placed under output_root().
std::filesystem::path resolve_output(const std::filesystem::path& path);

/// The oscillator settings used by reproduce-oscillator.
RunConfig oscillator_reference_config();

}  // namespace tfm::cli
