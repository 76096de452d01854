#include "run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace tfm::cli {

void propagate_seed(RunConfig& cfg) {
  cfg.model.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
  cfg.rollout.seed = cfg.seed;
}

namespace {

std::string clock_name(Clock c) { return c == Clock::FreeRunning ? "free" : "observation"; }

Clock parse_clock(const std::string& name) {
  if (name == "observation") return Clock::ObservationClocked;
  if (name == "free") return Clock::FreeRunning;
  throw UsageError("unknown clock '" + name + "' (expected observation or free)");
}

template <typename Int>
Int as_int(const YAML::Node& node) {
  const long long v = node.as<long long>();
  if (v < static_cast<long long>(std::numeric_limits<Int>::min()) ||
      static_cast<unsigned long long>(v) > static_cast<unsigned long long>(std::numeric_limits<Int>::max())) {
    throw UsageError("value out of range");
  }
  return static_cast<Int>(v);
}

using Setter = std::function<void(const YAML::Node&)>;
using Section = std::map<std::string, Setter>;

std::map<std::string, Section> schema(RunConfig& c) {
  auto& m = c.model;
  auto& t = c.train;
  auto& r = c.rollout;
  return {
      {"",
       {{"seed", [&](const YAML::Node& n) { c.seed = n.as<std::uint64_t>(); }},
        {"output_dir", [&](const YAML::Node& n) { c.output_dir = n.as<std::string>(); }}}},
      {"data",
       {{"benchmark", [&](const YAML::Node& n) { c.data.benchmark = n.as<std::string>(); }},
        {"train_csv", [&](const YAML::Node& n) { c.data.train_csv = n.as<std::string>(); }},
        {"val_csv", [&](const YAML::Node& n) { c.data.val_csv = n.as<std::string>(); }},
        {"test_csv", [&](const YAML::Node& n) { c.data.test_csv = n.as<std::string>(); }},
        {"noise", [&](const YAML::Node& n) { c.data.noise = n.as<double>(); }}}},
      {"model",
       {{"hidden_dim", [&](const YAML::Node& n) { m.hidden_dim = as_int<Index>(n); }},
        {"n_hidden_layers", [&](const YAML::Node& n) { m.n_hidden_layers = as_int<int>(n); }},
        {"activation", [&](const YAML::Node& n) { m.activation = parse_activation(n.as<std::string>()); }},
        {"use_cond", [&](const YAML::Node& n) { m.use_cond = n.as<bool>(); }},
        {"sigma_per_dim", [&](const YAML::Node& n) { m.sigma_per_dim = n.as<bool>(); }},
        {"mode", [&](const YAML::Node& n) { m.mode = parse_dynamics_mode(n.as<std::string>()); }}}},
      {"sampler",
       {{"sigma", [&](const YAML::Node& n) { m.sampler.sigma = n.as<double>(); }},
        {"history_len", [&](const YAML::Node& n) { m.sampler.history_len = as_int<int>(n); }},
        {"s_clip", [&](const YAML::Node& n) { m.sampler.s_clip = n.as<double>(); }}}},
      {"train",
       {{"lr", [&](const YAML::Node& n) { t.lr = n.as<double>(); }},
        {"batch_size", [&](const YAML::Node& n) { t.batch_size = as_int<Index>(n); }},
        {"max_epochs", [&](const YAML::Node& n) { t.max_epochs = as_int<int>(n); }},
        {"patience", [&](const YAML::Node& n) { t.patience = as_int<int>(n); }},
        {"steps_per_epoch", [&](const YAML::Node& n) { t.steps_per_epoch = as_int<int>(n); }},
        {"val_samples", [&](const YAML::Node& n) { t.val_samples = as_int<Index>(n); }},
        {"w_target", [&](const YAML::Node& n) { t.weights.target = n.as<double>(); }},
        {"w_sigma", [&](const YAML::Node& n) { t.weights.sigma = n.as<double>(); }},
        {"w_time", [&](const YAML::Node& n) { t.weights.time = n.as<double>(); }}}},
      {"rollout",
       {{"clock", [&](const YAML::Node& n) { r.clock = parse_clock(n.as<std::string>()); }},
        {"substeps", [&](const YAML::Node& n) { r.substeps = as_int<int>(n); }},
        {"sde_noise", [&](const YAML::Node& n) { r.sde_noise = n.as<double>(); }},
        {"noise_from_sigma_head", [&](const YAML::Node& n) { r.noise_from_sigma_head = n.as<bool>(); }},
        {"teacher_forcing", [&](const YAML::Node& n) { r.teacher_forcing = n.as<bool>(); }},
        {"n_warmup", [&](const YAML::Node& n) { r.n_warmup = as_int<int>(n); }},
        {"ensemble", [&](const YAML::Node& n) { c.ensemble = as_int<int>(n); }}}},
  };
}

void apply(const std::string& section, const std::string& key, const Setter& set, const YAML::Node& value) {
  const std::string where = section.empty() ? key : section + "." + key;
  if (!value.IsScalar()) throw UsageError("config key '" + where + "' must be a scalar");
  try {
    set(value);
  } catch (const YAML::Exception&) {
    throw UsageError("config key '" + where + "' has an invalid value '" + value.Scalar() + "'");
  } catch (const std::invalid_argument& err) {
    throw UsageError("config key '" + where + "': " + err.what());
  } catch (const UsageError& err) {
    throw UsageError("config key '" + where + "': " + err.what());
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& err) {
    throw UsageError(std::string("config is not valid YAML: ") + err.what());
  }
  RunConfig cfg;
  if (root.IsNull()) return cfg;
  if (!root.IsMap()) throw UsageError("config must be a mapping of sections");
  auto sections = schema(cfg);
  for (const auto& entry : root) {
    const auto name = entry.first.as<std::string>();
    const auto& value = entry.second;
    if (auto top = sections[""].find(name); top != sections[""].end()) {
      apply("", name, top->second, value);
      continue;
    }
    const auto sec = sections.find(name);
    if (sec == sections.end() || name.empty()) throw UsageError("unknown config key '" + name + "'");
    if (value.IsNull()) continue;
    if (!value.IsMap()) throw UsageError("config section '" + name + "' must be a mapping");
    for (const auto& kv : value) {
      const auto key = kv.first.as<std::string>();
      const auto setter = sec->second.find(key);
      if (setter == sec->second.end()) throw UsageError("unknown config key '" + name + "." + key + "'");
      apply(name, key, setter->second, kv.second);
    }
  }
  propagate_seed(cfg);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  auto cfg = parse_run_config(buf.str());
  // Data paths in a config file are relative to the file.
  const auto base = path.parent_path();
  for (auto* p : {&cfg.data.train_csv, &cfg.data.val_csv, &cfg.data.test_csv}) {
    if (!p->empty() && p->is_relative()) *p = std::filesystem::absolute(base / *p).lexically_normal();
  }
  return cfg;
}

std::string dump_run_config(const RunConfig& c) {
  const auto num = [](double v) { return format_double(v); };
  const auto& m = c.model;
  const auto& t = c.train;
  const auto& r = c.rollout;
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  out << YAML::Key << "output_dir" << YAML::Value << c.output_dir.string();
  out << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "benchmark" << YAML::Value << c.data.benchmark;
  out << YAML::Key << "train_csv" << YAML::Value << c.data.train_csv.string();
  out << YAML::Key << "val_csv" << YAML::Value << c.data.val_csv.string();
  out << YAML::Key << "test_csv" << YAML::Value << c.data.test_csv.string();
  out << YAML::Key << "noise" << YAML::Value << num(c.data.noise);
  out << YAML::EndMap;
  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "hidden_dim" << YAML::Value << m.hidden_dim;
  out << YAML::Key << "n_hidden_layers" << YAML::Value << m.n_hidden_layers;
  out << YAML::Key << "activation" << YAML::Value << to_string(m.activation);
  out << YAML::Key << "use_cond" << YAML::Value << m.use_cond;
  out << YAML::Key << "sigma_per_dim" << YAML::Value << m.sigma_per_dim;
  out << YAML::Key << "mode" << YAML::Value << to_string(m.mode);
  out << YAML::EndMap;
  out << YAML::Key << "sampler" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "sigma" << YAML::Value << num(m.sampler.sigma);
  out << YAML::Key << "history_len" << YAML::Value << m.sampler.history_len;
  out << YAML::Key << "s_clip" << YAML::Value << num(m.sampler.s_clip);
  out << YAML::EndMap;
  out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "lr" << YAML::Value << num(t.lr);
  out << YAML::Key << "batch_size" << YAML::Value << t.batch_size;
  out << YAML::Key << "max_epochs" << YAML::Value << t.max_epochs;
  out << YAML::Key << "patience" << YAML::Value << t.patience;
  out << YAML::Key << "steps_per_epoch" << YAML::Value << t.steps_per_epoch;
  out << YAML::Key << "val_samples" << YAML::Value << t.val_samples;
  out << YAML::Key << "w_target" << YAML::Value << num(t.weights.target);
  out << YAML::Key << "w_sigma" << YAML::Value << num(t.weights.sigma);
  out << YAML::Key << "w_time" << YAML::Value << num(t.weights.time);
  out << YAML::EndMap;
  out << YAML::Key << "rollout" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "clock" << YAML::Value << clock_name(r.clock);
  out << YAML::Key << "substeps" << YAML::Value << r.substeps;
  out << YAML::Key << "sde_noise" << YAML::Value << num(r.sde_noise);
  out << YAML::Key << "noise_from_sigma_head" << YAML::Value << r.noise_from_sigma_head;
  out << YAML::Key << "teacher_forcing" << YAML::Value << r.teacher_forcing;
  out << YAML::Key << "n_warmup" << YAML::Value << r.n_warmup;
  out << YAML::Key << "ensemble" << YAML::Value << c.ensemble;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::vector<std::string> validation_errors(const RunConfig& c) {
  std::vector<std::string> errors;
  const auto check = [&](bool ok, const std::string& message) {
    if (!ok) errors.push_back(message);
  };

  const bool has_benchmark = !c.data.benchmark.empty();
  check(has_benchmark != !c.data.train_csv.empty(), "data: set exactly one of benchmark or train_csv");
  check(!has_benchmark || c.data.benchmark == "oscillator", "data.benchmark: unknown benchmark '" + c.data.benchmark + "'");
  for (const auto* p : {&c.data.train_csv, &c.data.val_csv, &c.data.test_csv}) {
    check(p->empty() || std::filesystem::is_regular_file(*p), "data: file not found '" + p->string() + "'");
  }
  check(c.data.noise >= 0.0, "data.noise must be >= 0");

  check(c.model.hidden_dim >= 1, "model.hidden_dim must be >= 1");
  check(c.model.n_hidden_layers >= 1, "model.n_hidden_layers must be >= 1");
  const auto& s = c.model.sampler;
  check(s.sigma >= 0.0, "sampler.sigma must be >= 0");
  check(s.history_len >= 0, "sampler.history_len must be >= 0");
  check(s.s_clip > 0.0 && s.s_clip < 0.5, "sampler.s_clip must lie in (0, 0.5)");

  const auto& t = c.train;
  check(t.lr > 0.0, "train.lr must be > 0");
  check(t.batch_size >= 1, "train.batch_size must be >= 1");
  check(t.max_epochs >= 0, "train.max_epochs must be >= 0");
  check(t.patience >= 1, "train.patience must be >= 1");
  check(t.steps_per_epoch >= 0, "train.steps_per_epoch must be >= 0");
  check(t.val_samples >= 1, "train.val_samples must be >= 1");
  const auto& w = t.weights;
  check(w.target >= 0.0 && w.sigma >= 0.0 && w.time >= 0.0, "train: loss weights must be >= 0");
  check(w.target > 0.0 || w.sigma > 0.0 || w.time > 0.0, "train: at least one loss weight must be > 0");

  const auto& r = c.rollout;
  check(r.substeps >= 1, "rollout.substeps must be >= 1");
  check(r.sde_noise >= 0.0, "rollout.sde_noise must be >= 0");
  check(r.n_warmup >= 1, "rollout.n_warmup must be >= 1");
  check(c.ensemble >= 1, "rollout.ensemble must be >= 1");
  if (r.clock == Clock::FreeRunning) {
    check(!r.teacher_forcing, "rollout: the free clock cannot be combined with teacher_forcing");
    check(c.train.weights.time > 0.0, "rollout: the free clock needs train.w_time > 0");
  }
  check(!r.noise_from_sigma_head || c.train.weights.sigma > 0.0, "rollout: noise_from_sigma_head needs train.w_sigma > 0");
  return errors;
}

void validate(const RunConfig& cfg) {
  const auto errors = validation_errors(cfg);
  if (errors.empty()) return;
  std::string message = "invalid configuration:";
  for (const auto& e : errors) message += "\n  - " + e;
  throw UsageError(message);
}

std::string config_hash(const RunConfig& cfg) {
  // Where a run is written does not change what it computes.
  RunConfig keyed = cfg;
  keyed.output_dir.clear();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : dump_run_config(keyed)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << h;
  return out.str();
}

std::filesystem::path output_root() {
  const char* env = std::getenv("TFM_OUTPUT_ROOT");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("runs");
}

std::filesystem::path resolve_output(const std::filesystem::path& path) {
  return path.is_absolute() ? path : output_root() / path;
}

RunConfig oscillator_reference_config() {
  RunConfig cfg;
  cfg.data.benchmark = "oscillator";
  cfg.model.hidden_dim = 256;
  cfg.model.n_hidden_layers = 2;
  cfg.model.activation = Activation::Tanh;
  cfg.model.sampler.sigma = 0.1;
  cfg.model.sampler.history_len = 3;
  cfg.train.lr = 1e-3;
  cfg.train.batch_size = 64;
  cfg.train.max_epochs = 1000;
  cfg.train.patience = 3;
  cfg.train.steps_per_epoch = 200;
  cfg.train.weights = {1.0, 0.0, 0.0};
  cfg.rollout.substeps = 10;
  cfg.output_dir = "osc_tfm_ode";
  cfg.seed = 0;
  propagate_seed(cfg);
  return cfg;
}

}  // namespace tfm::cli
