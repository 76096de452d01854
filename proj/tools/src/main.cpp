#include <iostream>
#include <stdexcept>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

using namespace tfm;
using namespace tfm::cli;

void add_rollout_flags(CLI::App& cmd, RolloutOverrides& o, bool with_ensemble) {
  cmd.add_option_function<std::string>(
      "--mode", [&o](const std::string& s) { o.mode = parse_dynamics_mode(s); }, "ode or sde (default: the model's)");
  if (with_ensemble) {
    cmd.add_option_function<int>("--ensemble", [&o](int n) { o.ensemble = n; }, "SDE draws per trajectory");
  }
  cmd.add_option_function<double>("--sde-noise", [&o](double v) { o.sde_noise = v; }, "diffusion magnitude");
  cmd.add_flag_function(
      "--teacher-forcing,!--no-teacher-forcing", [&o](std::int64_t n) { o.teacher_forcing = n > 0; },
      "restart each interval from the observation");
  cmd.add_option_function<int>("--n-warmup", [&o](int n) { o.n_warmup = n; }, "observations given before free rollout");
  cmd.add_option_function<int>("--substeps", [&o](int n) { o.substeps = n; }, "Euler substeps per interval");
  cmd.add_option_function<std::uint64_t>("--seed", [&o](std::uint64_t s) { o.seed = s; }, "rollout seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory flow matching: generate data, train, evaluate and predict"};
  app.require_subcommand(1);

  GenerateOptions gen;
  std::string benchmark;
  std::vector<std::vector<std::string>> oscillators;
  auto* generate = app.add_subcommand("generate", "write oscillator trajectories to CSV");
  generate->add_option("--benchmark", benchmark, "named benchmark")->check(CLI::IsMember({"oscillator"}));
  generate->add_option("--oscillator", oscillators, "custom trajectory as key=value tokens (c k m dt n_steps x0 v0)")
      ->allow_extra_args()
      ->expected(1, -1);
  generate->add_option("--noise", gen.noise, "observation noise std");
  generate->add_option("--seed", gen.seed, "noise seed");
  generate->add_option("--out", gen.out, "CSV path (default <output root>/oscillator.csv)");

  TrainOptions tr;
  auto* train = app.add_subcommand("train", "train a model and write a run directory");
  train->add_option("--config", tr.config, "YAML run config (default: built-in oscillator settings)");
  train->add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { tr.seed = s; }, "root seed");
  train->add_option_function<int>("--max-epochs", [&](int n) { tr.max_epochs = n; });
  train->add_option_function<int>("--steps-per-epoch", [&](int n) { tr.steps_per_epoch = n; });
  train->add_option_function<std::string>("--out", [&](const std::string& s) { tr.out = s; }, "run directory");
  train->add_flag("--no-memory", tr.no_memory, "history length 0");
  train->add_flag("--no-cond", tr.no_cond, "ignore the condition vector");

  EvalOptions ev;
  auto* eval = app.add_subcommand("eval", "score rollouts of a trained run");
  eval->add_option("run_dir", ev.run_dir, "run directory")->required();
  eval->add_option("--data", ev.data, "dataset CSV (default: the run's test data)");
  eval->add_option("--out", ev.out, "output directory (default <run_dir>/eval)");
  add_rollout_flags(*eval, ev.rollout, true);

  PredictOptions pr;
  auto* predict = app.add_subcommand("predict", "write rollout predictions in data units");
  predict->add_option("run_dir", pr.run_dir, "run directory")->required();
  predict->add_option("--data", pr.data, "dataset CSV")->required();
  predict->add_option("--out", pr.out, "prediction CSV path")->required();
  predict->add_flag_function(
      "--free-running", [&](std::int64_t n) { pr.rollout.free_running = n > 0; }, "step lengths from the time head");
  add_rollout_flags(*predict, pr.rollout, false);

  ReproduceOptions rep;
  auto* reproduce = app.add_subcommand("reproduce-oscillator", "history-3 vs history-0 comparison on the oscillators");
  reproduce->add_option_function<int>("--epochs", [&](int n) { rep.epochs = n; }, "max epochs per model");
  reproduce->add_option_function<int>("--steps-per-epoch", [&](int n) { rep.steps_per_epoch = n; });
  reproduce->add_option("--seed", rep.seed);
  reproduce->add_option("--out", rep.out, "output directory (default <output root>/reproduce_oscillator)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*generate) {
      gen.benchmark = !benchmark.empty();
      for (const auto& tokens : oscillators) gen.oscillators.push_back(parse_oscillator_spec(tokens));
      cmd_generate(gen, std::cout);
    } else if (*train) {
      cmd_train(tr, std::cout);
    } else if (*eval) {
      cmd_eval(ev, std::cout);
    } else if (*predict) {
      cmd_predict(pr, std::cout);
    } else if (*reproduce) {
      cmd_reproduce_oscillator(rep, std::cout);
    }
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const DataError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
