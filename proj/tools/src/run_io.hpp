#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "run_config.hpp"

namespace tfm::cli {

/// Training, validation and test data in data units.
struct RunData {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Adds N(0, noise^2) to every state entry using the "observation_noise"
/// stream of `seed`.
Dataset add_observation_noise(Dataset ds, double noise, std::uint64_t seed);
/// Reads a dataset CSV; an empty file is a UsageError.
Dataset load_dataset_csv(const std::filesystem::path& path);
RunData load_run_data(const RunConfig& cfg);

nlohmann::json to_json(const NormStats& norm);
NormStats norm_from_json(const nlohmann::json& j);

/// Writes model.json plus one checkpoint per head into `dir`.
void save_model(const std::filesystem::path& dir, const TfmModel& model, const std::string& config_hash);
TfmModel load_model(const std::filesystem::path& dir);

/// Writes `text` to `path`, creating parent directories. Throws
/// std::runtime_error when the file cannot be written.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Pretty-printed JSON with a trailing newline.
std::string dump_json(const nlohmann::json& j);

}  // namespace tfm::cli
