#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "tfm/model.hpp"

namespace tfm {

enum class Clock {
  /// Integrate across the true observation intervals.
  ObservationClocked,
  /// Step lengths come from the time head.
  FreeRunning,
};

struct RolloutConfig {
  Clock clock = Clock::ObservationClocked;
  int substeps = 10;
  /// Diffusion magnitude of stochastic rollouts.
  double sde_noise = 0.1;
  /// Derive the diffusion from the sigma head instead of sde_noise.
  bool noise_from_sigma_head = false;
  /// Restart every interval from the true observation.
  bool teacher_forcing = true;
  /// Leading true observations given to a non-teacher-forced rollout (>= 1).
  int n_warmup = 1;
  std::uint64_t seed = 0;
};

void validate(const RolloutConfig& cfg, const TfmModel& model);

struct RolloutResult {
  std::string traj_id;
  Vector times;
  /// Row i is the prediction at times[i]; row 0 (and any warm-up rows) are
  /// copied from the data.
  Matrix pred_states;
  /// Sigma-head output for the interval ending at times[i]; 0 for given rows
  /// and when the sigma head was never trained.
  Vector pred_uncertainty;
  bool teacher_forced = true;
  bool stochastic = false;
  /// False when integration hit a non-finite state; arrays then hold only the
  /// rows computed before the failure.
  bool complete = true;
  /// Substeps whose denominator hit kRemainingFloor.
  Index clamped_steps = 0;
};

/// (predictor(t, x, ...) - x) / remaining with the remaining time floored.
Vector step_velocity(const TfmModel& model, double t_abs, const Vector& x, const Matrix& history, const Vector& cond,
                     double remaining, bool* clamped = nullptr);

/// Euler integration of the reparameterized field, no diffusion.
RolloutResult rollout_ode(const TfmModel& model, const Trajectory& traj, const RolloutConfig& cfg);

/// Euler-Maruyama: each substep adds noise * sqrt(dt) * N(0, I). With zero
/// noise the result is bitwise identical to rollout_ode.
RolloutResult rollout_sde(const TfmModel& model, const Trajectory& traj, const RolloutConfig& cfg, Rng& rng);

/// Tidy prediction table: traj_id,t,pred_x0..,true_x0..,uncertainty. True
/// columns are left empty when a row has no observation at that time.
void write_predictions_csv(const std::vector<RolloutResult>& results, const Dataset& truth, std::ostream& out);

}  // namespace tfm
