#include "commands.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "run_io.hpp"
#include "tfm/metrics.hpp"

namespace tfm::cli {

using nlohmann::json;

OscillatorParams parse_oscillator_spec(const std::vector<std::string>& tokens) {
  OscillatorParams p;
  for (const auto& tok : tokens) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw UsageError("oscillator parameter '" + tok + "' is not key=value");
    const auto key = tok.substr(0, eq);
    const auto text = tok.substr(eq + 1);
    double value = 0.0;
    std::size_t used = 0;
    try {
      value = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != text.size()) throw UsageError("oscillator parameter '" + tok + "' has a non-numeric value");
    if (key == "c") p.c = value;
    else if (key == "k") p.k = value;
    else if (key == "m") p.m = value;
    else if (key == "dt") p.dt = value;
    else if (key == "x0") p.x0 = value;
    else if (key == "v0") p.v0 = value;
    else if (key == "n_steps") {
      if (value != static_cast<int>(value)) throw UsageError("n_steps must be an integer");
      p.n_steps = static_cast<int>(value);
    } else {
      throw UsageError("unknown oscillator parameter '" + key + "'");
    }
  }
  return p;
}

namespace {

json params_json(const OscillatorParams& p) {
  return {{"c", p.c}, {"k", p.k}, {"m", p.m}, {"dt", p.dt}, {"n_steps", p.n_steps}, {"x0", p.x0}, {"v0", p.v0}};
}

std::string csv_text(const Dataset& ds) {
  std::ostringstream out;
  write_csv(ds, out);
  return out.str();
}

json epoch_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},           {"loss_target", r.loss_target}, {"loss_sigma", r.loss_sigma},
          {"loss_time", r.loss_time},   {"loss_total", r.loss_total},   {"val_target", r.val_target},
          {"val_sigma", r.val_sigma},   {"val_time", r.val_time},       {"val_total", r.val_total}};
}

json report_json(const TrainReport& report, const std::string& hash, std::uint64_t seed) {
  json j = {{"config_hash", hash},
            {"seed", seed},
            {"stop_reason", to_string(report.stop)},
            {"message", report.message},
            {"epochs_run", report.epochs.size()},
            {"best_epoch", report.best_epoch}};
  j["best"] = report.best_epoch >= 0 ? epoch_json(report.epochs[static_cast<std::size_t>(report.best_epoch)]) : json();
  return j;
}

TfmModel fresh_model(const RunConfig& cfg, const Dataset& train_raw, const NormStats& norm) {
  ModelConfig mc = cfg.model;
  mc.dim_state = train_raw.dim_state;
  mc.dim_cond = train_raw.dim_cond;
  return make_model(mc, norm);
}

/// Config snapshot stored with a run, or the built-in defaults.
RunConfig run_config_of(const std::filesystem::path& run_dir) {
  const auto path = run_dir / "config.yaml";
  return std::filesystem::is_regular_file(path) ? load_run_config(path) : oscillator_reference_config();
}

std::string stored_hash(const std::filesystem::path& run_dir) {
  const auto j = json::parse(read_text(run_dir / "model.json"));
  return j.value("config_hash", "");
}

RolloutConfig apply_overrides(RolloutConfig r, const RolloutOverrides& o, std::uint64_t seed) {
  r.seed = o.seed.value_or(seed);
  if (o.sde_noise) r.sde_noise = *o.sde_noise;
  if (o.teacher_forcing) r.teacher_forcing = *o.teacher_forcing;
  if (o.free_running) r.clock = *o.free_running ? Clock::FreeRunning : Clock::ObservationClocked;
  if (o.n_warmup) r.n_warmup = *o.n_warmup;
  if (o.substeps) r.substeps = *o.substeps;
  if (r.clock == Clock::FreeRunning && !o.teacher_forcing) r.teacher_forcing = false;
  return r;
}

Dataset eval_data(const RunConfig& cfg, const std::filesystem::path& data, const TfmModel& model) {
  const Dataset raw = data.empty() ? load_run_data(cfg).test : load_dataset_csv(data);
  if (raw.dim_state != model.dim_state() || raw.dim_cond != model.config.dim_cond) {
    std::ostringstream msg;
    msg << "dimension mismatch: model expects " << model.dim_state() << " state and " << model.config.dim_cond
        << " condition columns, data has " << raw.dim_state << " and " << raw.dim_cond;
    throw UsageError(msg.str());
  }
  return raw;
}

/// One rollout list per trajectory; ODE runs once, SDE `draws` times.
std::vector<std::vector<RolloutResult>> run_rollouts(const TfmModel& model, const Dataset& ds, const RolloutConfig& rc,
                                                     DynamicsMode mode, int draws) {
  try {
    validate(rc, model);
  } catch (const std::invalid_argument& err) {
    throw UsageError(err.what());
  }
  std::vector<std::vector<RolloutResult>> out(ds.size());
  auto rng = make_stream(rc.seed, "rollout_ensemble");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& traj = ds.trajectories[i];
    if (mode == DynamicsMode::Ode) {
      out[i].push_back(rollout_ode(model, traj, rc));
    } else {
      for (int d = 0; d < draws; ++d) out[i].push_back(rollout_sde(model, traj, rc, rng));
    }
    for (const auto& r : out[i]) {
      if (!r.complete) {
        throw std::runtime_error("rollout of '" + traj.id + "' hit a non-finite state after " +
                                 std::to_string(r.times.size()) + " observations");
      }
    }
  }
  return out;
}

std::vector<RolloutResult> first_draws(const std::vector<std::vector<RolloutResult>>& ens) {
  std::vector<RolloutResult> out;
  for (const auto& e : ens) out.push_back(e.front());
  return out;
}

std::string ensemble_csv(const std::vector<std::vector<RolloutResult>>& ens, Index d) {
  std::ostringstream out;
  out << "traj_id,draw,t";
  for (Index j = 0; j < d; ++j) out << ",pred_x" << j;
  out << '\n';
  for (const auto& draws : ens) {
    for (std::size_t k = 0; k < draws.size(); ++k) {
      const auto& r = draws[k];
      for (Index i = 0; i < r.times.size(); ++i) {
        out << r.traj_id << ',' << k << ',' << format_double(r.times[i]);
        for (Index j = 0; j < d; ++j) out << ',' << format_double(r.pred_states(i, j));
        out << '\n';
      }
    }
  }
  return out.str();
}

}  // namespace

void cmd_generate(const GenerateOptions& opts, std::ostream& log) {
  if (!opts.benchmark && opts.oscillators.empty()) throw UsageError("generate needs --benchmark oscillator or --oscillator");
  if (!(opts.noise >= 0.0)) throw UsageError("--noise must be >= 0");
  std::vector<Trajectory> trajs;
  json entries = json::array();
  if (opts.benchmark) {
    for (auto& t : make_oscillator_benchmark().trajectories) {
      OscillatorParams p;
      p.c = t.cond[0];
      entries.push_back({{"id", t.id}, {"params", params_json(p)}, {"time_divisor", kBenchmarkTimeDivisor}});
      trajs.push_back(std::move(t));
    }
  }
  for (std::size_t i = 0; i < opts.oscillators.size(); ++i) {
    const std::string id = "osc_" + std::to_string(i);
    try {
      trajs.push_back(generate_oscillator(opts.oscillators[i], id));
    } catch (const std::invalid_argument& err) {
      throw UsageError(err.what());
    }
    entries.push_back({{"id", id}, {"params", params_json(opts.oscillators[i])}, {"time_divisor", 1.0}});
  }
  const Dataset ds = add_observation_noise(make_dataset(std::move(trajs)), opts.noise, opts.seed);

  const auto csv_path = opts.out.empty() ? resolve_output("oscillator.csv") : opts.out;
  auto manifest_path = csv_path;
  manifest_path.replace_filename(csv_path.stem().string() + ".manifest.json");
  write_text(csv_path, csv_text(ds));
  const json manifest = {{"csv", csv_path.filename().string()},
                         {"generator", "damped_oscillator"},
                         {"noise", opts.noise},
                         {"seed", opts.seed},
                         {"n_trajectories", ds.size()},
                         {"trajectories", entries}};
  write_text(manifest_path, dump_json(manifest));
  log << "wrote " << ds.size() << " trajectories to " << csv_path.string() << '\n';
}

RunConfig resolve_train_config(const TrainOptions& opts) {
  RunConfig cfg = opts.config.empty() ? oscillator_reference_config() : load_run_config(opts.config);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.max_epochs) cfg.train.max_epochs = *opts.max_epochs;
  if (opts.steps_per_epoch) cfg.train.steps_per_epoch = *opts.steps_per_epoch;
  if (opts.out) cfg.output_dir = *opts.out;
  if (opts.no_memory) cfg.model.sampler.history_len = 0;
  if (opts.no_cond) cfg.model.use_cond = false;
  propagate_seed(cfg);
  validate(cfg);
  return cfg;
}

TrainOutcome cmd_train(const TrainOptions& opts, std::ostream& log) {
  TrainOutcome outcome;
  outcome.config = resolve_train_config(opts);
  const auto& cfg = outcome.config;
  outcome.run_dir = resolve_output(cfg.output_dir);

  const RunData data = load_run_data(cfg);
  const NormStats norm = fit_norm(data.train);
  const Dataset train_ds = apply_norm(data.train, norm);
  const Dataset val_ds = apply_norm(data.val, norm);
  TfmModel model = fresh_model(cfg, data.train, norm);
  const std::string hash = config_hash(cfg);

  std::filesystem::create_directories(outcome.run_dir);
  write_text(outcome.run_dir / "config.yaml", dump_run_config(cfg));
  const auto log_path = outcome.run_dir / "train_log.jsonl";
  std::ofstream epoch_log(log_path, std::ios::binary | std::ios::trunc);
  if (!epoch_log) throw std::runtime_error("cannot write '" + log_path.string() + "'");

  log << "training " << train_ds.size() << " trajectories (" << train_ds.transition_count()
      << " transitions), config " << hash << '\n';
  outcome.report = train(model, train_ds, val_ds, cfg.train, [&](const EpochRecord& r) {
    epoch_log << epoch_json(r).dump() << '\n';
    epoch_log.flush();
    log << "epoch " << r.epoch << "  train " << r.loss_total << "  val " << r.val_total << '\n';
  });
  epoch_log.close();

  save_model(outcome.run_dir, model, hash);
  write_text(outcome.run_dir / "train_report.json", dump_json(report_json(outcome.report, hash, cfg.seed)));
  log << "stopped: " << to_string(outcome.report.stop) << ", best epoch " << outcome.report.best_epoch << ", run "
      << outcome.run_dir.string() << '\n';
  if (outcome.report.stop == StopReason::Diverged) {
    throw std::runtime_error("training diverged: " + outcome.report.message);
  }
  return outcome;
}

json cmd_eval(const EvalOptions& opts, std::ostream& log) {
  const TfmModel model = load_model(opts.run_dir);
  const RunConfig cfg = run_config_of(opts.run_dir);
  const Dataset test = apply_norm(eval_data(cfg, opts.data, model), model.norm);

  const RolloutConfig rc = apply_overrides(cfg.rollout, opts.rollout, cfg.seed);
  if (rc.clock == Clock::FreeRunning) throw UsageError("eval scores observation-clocked rollouts; use predict for the free clock");
  const DynamicsMode mode = opts.rollout.mode.value_or(model.config.mode);
  const int draws = mode == DynamicsMode::Ode ? 1 : opts.rollout.ensemble.value_or(cfg.ensemble);
  if (draws < 1) throw UsageError("--ensemble must be >= 1");

  const auto ens = run_rollouts(model, test, rc, mode, draws);
  double mse = 0.0;
  std::vector<double> per_mse;
  for (std::size_t i = 0; i < test.size(); ++i) {
    double sum = 0.0;
    for (const auto& r : ens[i]) sum += mean_mse(r, test.trajectories[i]);
    per_mse.push_back(sum / static_cast<double>(ens[i].size()));
    mse += per_mse.back();
  }
  mse /= static_cast<double>(test.size());
  std::vector<double> per_mmd;
  const double mmd = increment_mmd(ens, test, &per_mmd);
  const Index n_unc = cfg.train.val_samples;
  const json unc = model.sigma_head_trained ? json(uncertainty_mse(model, test, n_unc, rc.seed)) : json();

  json per = json::array();
  for (std::size_t i = 0; i < test.size(); ++i) {
    per.push_back({{"id", test.trajectories[i].id}, {"mse", per_mse[i]}, {"mmd", per_mmd[i]}});
  }
  const json metrics = {{"mean_mse", mse},
                        {"rbf_mmd", mmd},
                        {"uncertainty_mse", unc},
                        {"n_trajectories", test.size()},
                        {"config_hash", stored_hash(opts.run_dir)},
                        {"seed", rc.seed},
                        {"mode", to_string(mode)},
                        {"ensemble", draws},
                        {"teacher_forcing", rc.teacher_forcing},
                        {"n_warmup", rc.teacher_forcing ? 1 : rc.n_warmup},
                        {"substeps", rc.substeps},
                        {"sde_noise", mode == DynamicsMode::Sde ? json(rc.sde_noise) : json()},
                        {"space", "normalized"},
                        {"per_trajectory", per}};

  const auto out_dir = opts.out.empty() ? opts.run_dir / "eval" : opts.out;
  write_text(out_dir / "metrics.json", dump_json(metrics));
  std::ostringstream preds;
  write_predictions_csv(first_draws(ens), test, preds);
  write_text(out_dir / "predictions.csv", preds.str());
  if (draws > 1) write_text(out_dir / "ensemble.csv", ensemble_csv(ens, test.dim_state));
  log << "mean_mse " << mse << "  rbf_mmd " << mmd;
  if (!unc.is_null()) log << "  uncertainty_mse " << unc.get<double>();
  log << "\nwrote " << (out_dir / "metrics.json").string() << '\n';
  return metrics;
}

void cmd_predict(const PredictOptions& opts, std::ostream& log) {
  if (opts.data.empty()) throw UsageError("predict needs --data");
  if (opts.out.empty()) throw UsageError("predict needs --out");
  const TfmModel model = load_model(opts.run_dir);
  const RunConfig cfg = run_config_of(opts.run_dir);
  const Dataset raw = eval_data(cfg, opts.data, model);
  const Dataset ds = apply_norm(raw, model.norm);
  const RolloutConfig rc = apply_overrides(cfg.rollout, opts.rollout, cfg.seed);
  const DynamicsMode mode = opts.rollout.mode.value_or(model.config.mode);

  auto results = first_draws(run_rollouts(model, ds, rc, mode, 1));
  for (std::size_t i = 0; i < results.size(); ++i) {
    auto& r = results[i];
    r.pred_states = model.norm.denormalize_states(r.pred_states);
    if (rc.clock == Clock::ObservationClocked) {
      r.times = raw.trajectories[i].times.head(r.times.size());
    } else {
      r.times *= model.norm.time_scale;
    }
  }
  std::ostringstream out;
  write_predictions_csv(results, raw, out);
  write_text(opts.out, out.str());
  log << "wrote predictions for " << results.size() << " trajectories to " << opts.out.string() << '\n';
}

json cmd_reproduce_oscillator(const ReproduceOptions& opts, std::ostream& log) {
  RunConfig base = oscillator_reference_config();
  base.seed = opts.seed;
  if (opts.epochs) base.train.max_epochs = *opts.epochs;
  if (opts.steps_per_epoch) base.train.steps_per_epoch = *opts.steps_per_epoch;
  propagate_seed(base);
  validate(base);
  const auto out_dir = opts.out.empty() ? resolve_output("reproduce_oscillator") : opts.out;

  const Dataset raw = make_oscillator_benchmark();
  const NormStats norm = fit_norm(raw);
  const Dataset ds = apply_norm(raw, norm);

  struct Variant {
    const char* name;
    int history;
    bool use_cond;
  };
  const Variant variants[] = {{"history3", 3, true}, {"history0", 0, true}, {"history0_nocond", 0, false}};

  json rows = json::array();
  std::vector<double> tf_mse;
  for (const auto& v : variants) {
    RunConfig cfg = base;
    cfg.model.sampler.history_len = v.history;
    cfg.model.use_cond = v.use_cond;
    TfmModel model = fresh_model(cfg, raw, norm);
    const TrainReport report = train(model, ds, ds, cfg.train);
    if (report.stop == StopReason::Diverged) throw std::runtime_error(std::string(v.name) + " diverged: " + report.message);
    save_model(out_dir / v.name, model, config_hash(cfg));

    RolloutConfig tf = cfg.rollout;
    RolloutConfig free = cfg.rollout;
    free.teacher_forcing = false;
    free.n_warmup = 4;
    const auto forced = first_draws(run_rollouts(model, ds, tf, DynamicsMode::Ode, 1));
    const auto rolled = first_draws(run_rollouts(model, ds, free, DynamicsMode::Ode, 1));
    std::ostringstream a, b;
    write_predictions_csv(forced, ds, a);
    write_predictions_csv(rolled, ds, b);
    write_text(out_dir / ("predictions_" + std::string(v.name) + ".csv"), a.str());
    write_text(out_dir / ("rollout_" + std::string(v.name) + ".csv"), b.str());

    json assignment = json::array();
    int correct = 0;
    for (std::size_t i = 0; i < rolled.size(); ++i) {
      std::size_t best = 0;
      double best_dist = 0.0;
      for (std::size_t j = 0; j < ds.size(); ++j) {
        const auto& truth = ds.trajectories[j].states;
        const double dist = (rolled[i].pred_states.bottomRows(1) - truth.bottomRows(1)).squaredNorm();
        if (j == 0 || dist < best_dist) {
          best = j;
          best_dist = dist;
        }
      }
      assignment.push_back(ds.trajectories[best].id);
      correct += best == i ? 1 : 0;
    }
    tf_mse.push_back(mean_mse(forced, ds));
    rows.push_back({{"name", v.name},
                    {"history_len", v.history},
                    {"use_cond", v.use_cond},
                    {"epochs_run", report.epochs.size()},
                    {"best_epoch", report.best_epoch},
                    {"stop_reason", to_string(report.stop)},
                    {"teacher_forced_mse", tf_mse.back()},
                    {"rollout_mse", mean_mse(rolled, ds)},
                    {"endpoint_assignment", assignment},
                    {"coupling_correct", correct}});
  }

  const json summary = {{"seed", base.seed},
                        {"config_hash", config_hash(base)},
                        {"max_epochs", base.train.max_epochs},
                        {"steps_per_epoch", base.train.steps_per_epoch},
                        {"variants", rows},
                        {"memory_advantage", tf_mse[0] < tf_mse[1]},
                        {"mse_ratio_history0_vs_history3", tf_mse[1] / tf_mse[0]}};
  write_text(out_dir / "summary.json", dump_json(summary));

  log << std::left << std::setw(18) << "variant" << std::setw(16) << "tf_mse" << std::setw(16) << "rollout_mse"
      << "coupling\n";
  for (const auto& r : rows) {
    log << std::setw(18) << r["name"].get<std::string>() << std::setw(16) << r["teacher_forced_mse"].get<double>()
        << std::setw(16) << r["rollout_mse"].get<double>() << r["coupling_correct"].get<int>() << "/3\n";
  }
  log << "history-3 beats history-0: " << (summary["memory_advantage"].get<bool>() ? "yes" : "no") << " (ratio "
      << summary["mse_ratio_history0_vs_history3"].get<double>() << ")\nwrote " << (out_dir / "summary.json").string()
      << '\n';
  return summary;
}

}  // namespace tfm::cli
