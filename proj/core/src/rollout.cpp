#include "tfm/rollout.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace tfm {

void validate(const RolloutConfig& cfg, const TfmModel& model) {
  if (cfg.substeps < 1) throw std::invalid_argument("substeps must be >= 1");
  if (!(cfg.sde_noise >= 0.0)) throw std::invalid_argument("sde noise must be >= 0");
  if (cfg.n_warmup < 1) throw std::invalid_argument("n_warmup must be >= 1");
  if (cfg.clock == Clock::FreeRunning) {
    if (cfg.teacher_forcing) throw std::invalid_argument("free-running rollouts cannot be teacher forced");
    if (!model.time_head_trained) throw std::invalid_argument("free-running rollouts need a trained time head");
  }
  if (cfg.noise_from_sigma_head && !model.sigma_head_trained) {
    throw std::invalid_argument("sigma-head diffusion needs a trained sigma head");
  }
}

Vector step_velocity(const TfmModel& model, double t_abs, const Vector& x, const Matrix& history, const Vector& cond,
                     double remaining, bool* clamped) {
  const Matrix x_hat = model.predictor.forward(model_input(model, t_abs, x, history, cond));
  return velocity_from_target(x_hat.row(0).transpose(), x, remaining, clamped);
}

namespace {

// An untrained sigma head reports nothing rather than its initialization noise.
double uncertainty_at(const TfmModel& model, const Matrix& input) {
  return model.sigma_head_trained ? predicted_squared_error(model, input).sum() : 0.0;
}

double remaining_at(const TfmModel& model, const Matrix& input) {
  return std::max(predicted_remaining(model, input)[0], kRemainingFloor);
}

class Integrator {
 public:
  Integrator(const TfmModel& model, const Trajectory& traj, const RolloutConfig& cfg, Rng* rng)
      : model_(model), traj_(traj), cfg_(cfg), rng_(rng) {}

  RolloutResult run() {
    validate(cfg_, model_);
    if (traj_.dim() != model_.dim_state() || traj_.cond_dim() != model_.config.dim_cond) {
      throw std::invalid_argument("trajectory dimensions do not match the model");
    }
    const Index T = traj_.length();
    const bool teacher = cfg_.teacher_forcing;
    const Index given = teacher ? 1 : std::min<Index>(cfg_.n_warmup, T);
    const bool free_running = cfg_.clock == Clock::FreeRunning;

    RolloutResult out;
    out.traj_id = traj_.id;
    out.teacher_forced = teacher;
    out.stochastic = rng_ != nullptr;
    out.times = free_running ? Vector(Vector::Zero(T)) : traj_.times;
    out.times.head(given) = traj_.times.head(given);
    out.pred_states = Matrix::Zero(T, traj_.dim());
    out.pred_states.topRows(given) = traj_.states.topRows(given);
    out.pred_uncertainty = Vector::Zero(T);

    for (Index k = given - 1; k + 1 < T; ++k) {
      const Matrix& source = teacher ? traj_.states : out.pred_states;
      Vector x = source.row(k).transpose();
      const Matrix hist = assemble_history(source, k, model_.history_len());
      const double t0 = out.times[k];
      const Matrix start_input = model_input(model_, t0, x, hist, traj_.cond);
      const double uncertainty = uncertainty_at(model_, start_input);
      const double t1 = free_running ? t0 + remaining_at(model_, start_input) : traj_.times[k + 1];
      const double noise = diffusion(uncertainty, t1 - t0);

      const double dt = (t1 - t0) / cfg_.substeps;
      for (int j = 0; j < cfg_.substeps; ++j) {
        const double t = t0 + j * dt;
        const double remaining =
            free_running ? remaining_at(model_, model_input(model_, t, x, hist, traj_.cond)) : t1 - t;
        bool clamped = false;
        x += step_velocity(model_, t, x, hist, traj_.cond, remaining, &clamped) * dt;
        if (clamped) ++out.clamped_steps;
        if (noise > 0.0) {
          const double scale = noise * std::sqrt(dt);
          for (Index i = 0; i < x.size(); ++i) x[i] += scale * normal_(*rng_);
        }
        if (!x.allFinite()) break;
      }
      if (!x.allFinite() || !std::isfinite(t1)) {
        out.complete = false;
        out.times.conservativeResize(k + 1);
        out.pred_states.conservativeResize(k + 1, Eigen::NoChange);
        out.pred_uncertainty.conservativeResize(k + 1);
        return out;
      }
      out.times[k + 1] = t1;
      out.pred_states.row(k + 1) = x.transpose();
      out.pred_uncertainty[k + 1] = uncertainty;
    }
    return out;
  }

 private:
  double diffusion(double uncertainty, double interval) const {
    if (rng_ == nullptr) return 0.0;
    if (cfg_.noise_from_sigma_head) return std::sqrt(std::max(uncertainty, 0.0) / interval);
    return cfg_.sde_noise;
  }

  const TfmModel& model_;
  const Trajectory& traj_;
  const RolloutConfig& cfg_;
  Rng* rng_;
  std::normal_distribution<double> normal_;
};

}  // namespace

RolloutResult rollout_ode(const TfmModel& model, const Trajectory& traj, const RolloutConfig& cfg) {
  return Integrator(model, traj, cfg, nullptr).run();
}

RolloutResult rollout_sde(const TfmModel& model, const Trajectory& traj, const RolloutConfig& cfg, Rng& rng) {
  return Integrator(model, traj, cfg, &rng).run();
}

void write_predictions_csv(const std::vector<RolloutResult>& results, const Dataset& truth, std::ostream& out) {
  const Index d = truth.dim_state;
  out << "traj_id,t";
  for (Index j = 0; j < d; ++j) out << ",pred_x" << j;
  for (Index j = 0; j < d; ++j) out << ",true_x" << j;
  out << ",uncertainty\n";
  for (const auto& r : results) {
    const Trajectory* match = nullptr;
    for (const auto& traj : truth.trajectories) {
      if (traj.id == r.traj_id) match = &traj;
    }
    for (Index i = 0; i < r.times.size(); ++i) {
      out << r.traj_id << ',' << format_double(r.times[i]);
      for (Index j = 0; j < d; ++j) out << ',' << format_double(r.pred_states(i, j));
      const bool aligned = match != nullptr && i < match->length() && match->times[i] == r.times[i];
      for (Index j = 0; j < d; ++j) {
        out << ',';
        if (aligned) out << format_double(match->states(i, j));
      }
      out << ',' << format_double(r.pred_uncertainty[i]) << '\n';
    }
  }
}

}  // namespace tfm
