#include "run_io.hpp"

#include <fstream>
#include <sstream>

namespace tfm::cli {

using nlohmann::json;

Dataset add_observation_noise(Dataset ds, double noise, std::uint64_t seed) {
  if (noise <= 0.0) return ds;
  auto rng = make_stream(seed, "observation_noise");
  std::normal_distribution<double> normal(0.0, noise);
  for (auto& traj : ds.trajectories) {
    for (Index i = 0; i < traj.states.rows(); ++i) {
      for (Index j = 0; j < traj.states.cols(); ++j) traj.states(i, j) += normal(rng);
    }
  }
  return ds;
}

Dataset load_dataset_csv(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw UsageError("data file not found '" + path.string() + "'");
  try {
    return read_csv(path);
  } catch (const DataError& err) {
    throw UsageError(path.string() + ": " + err.what());
  }
}

RunData load_run_data(const RunConfig& cfg) {
  RunData out;
  if (cfg.data.benchmark == "oscillator") {
    out.train = add_observation_noise(make_oscillator_benchmark(), cfg.data.noise, cfg.seed);
  } else {
    out.train = load_dataset_csv(cfg.data.train_csv);
  }
  out.val = cfg.data.val_csv.empty() ? out.train : load_dataset_csv(cfg.data.val_csv);
  out.test = cfg.data.test_csv.empty() ? out.train : load_dataset_csv(cfg.data.test_csv);
  for (const auto* ds : {&out.val, &out.test}) {
    if (ds->dim_state != out.train.dim_state || ds->dim_cond != out.train.dim_cond) {
      throw UsageError("validation/test data dimensions differ from the training data");
    }
  }
  return out;
}

namespace {

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

constexpr const char* kModelFormat = "tfm-model";
constexpr int kModelVersion = 1;

}  // namespace

json to_json(const NormStats& norm) {
  return {{"state_mean", vector_json(norm.state_mean)},
          {"state_std", vector_json(norm.state_std)},
          {"time_scale", norm.time_scale},
          {"interval_unit", norm.interval_unit},
          {"error_unit", norm.error_unit}};
}

NormStats norm_from_json(const json& j) {
  NormStats n;
  n.state_mean = vector_from(j.at("state_mean"));
  n.state_std = vector_from(j.at("state_std"));
  n.time_scale = j.at("time_scale").get<double>();
  n.interval_unit = j.at("interval_unit").get<double>();
  n.error_unit = j.at("error_unit").get<double>();
  return n;
}

void save_model(const std::filesystem::path& dir, const TfmModel& model, const std::string& config_hash) {
  const auto& c = model.config;
  const json j = {
      {"format", kModelFormat},
      {"version", kModelVersion},
      {"config_hash", config_hash},
      {"dim_state", c.dim_state},
      {"dim_cond", c.dim_cond},
      {"hidden_dim", c.hidden_dim},
      {"n_hidden_layers", c.n_hidden_layers},
      {"activation", to_string(c.activation)},
      {"use_cond", c.use_cond},
      {"sigma_per_dim", c.sigma_per_dim},
      {"mode", to_string(c.mode)},
      {"seed", c.seed},
      {"sampler", {{"sigma", c.sampler.sigma}, {"history_len", c.sampler.history_len}, {"s_clip", c.sampler.s_clip}}},
      {"norm", to_json(model.norm)},
      {"sigma_head_trained", model.sigma_head_trained},
      {"time_head_trained", model.time_head_trained},
  };
  write_text(dir / "model.json", dump_json(j));
  save_checkpoint(model.predictor, dir / "predictor.ckpt");
  save_checkpoint(model.sigma_head, dir / "sigma_head.ckpt");
  save_checkpoint(model.time_head, dir / "time_head.ckpt");
}

TfmModel load_model(const std::filesystem::path& dir) {
  const auto meta_path = dir / "model.json";
  if (!std::filesystem::is_regular_file(meta_path)) throw UsageError("no model found in '" + dir.string() + "'");
  json j;
  try {
    j = json::parse(read_text(meta_path));
  } catch (const json::exception& err) {
    throw UsageError(meta_path.string() + ": " + err.what());
  }
  if (j.value("format", "") != kModelFormat || j.value("version", 0) != kModelVersion) {
    throw UsageError(meta_path.string() + ": unsupported model format");
  }
  ModelConfig c;
  c.dim_state = j.at("dim_state").get<Index>();
  c.dim_cond = j.at("dim_cond").get<Index>();
  c.hidden_dim = j.at("hidden_dim").get<Index>();
  c.n_hidden_layers = j.at("n_hidden_layers").get<int>();
  c.activation = parse_activation(j.at("activation").get<std::string>());
  c.use_cond = j.at("use_cond").get<bool>();
  c.sigma_per_dim = j.at("sigma_per_dim").get<bool>();
  c.mode = parse_dynamics_mode(j.at("mode").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& s = j.at("sampler");
  c.sampler.sigma = s.at("sigma").get<double>();
  c.sampler.history_len = s.at("history_len").get<int>();
  c.sampler.s_clip = s.at("s_clip").get<double>();

  auto model = make_model(c, norm_from_json(j.at("norm")));
  const auto restore = [&](Mlp& head, const char* file) {
    Mlp loaded = load_checkpoint(dir / file);
    if (!(loaded.config() == head.config())) {
      throw UsageError((dir / file).string() + ": checkpoint shape does not match model.json");
    }
    head = std::move(loaded);
  };
  restore(model.predictor, "predictor.ckpt");
  restore(model.sigma_head, "sigma_head.ckpt");
  restore(model.time_head, "time_head.ckpt");
  model.sigma_head_trained = j.at("sigma_head_trained").get<bool>();
  model.time_head_trained = j.at("time_head_trained").get<bool>();
  return model;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

}  // namespace tfm::cli
