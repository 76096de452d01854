#pragma once

#include <vector>

#include "tfm/data.hpp"
#include "tfm/rng.hpp"

namespace tfm {

struct SamplerConfig {
  /// Bridge noise scale.
  double sigma = 0.1;
  /// Number of past observations fed to the networks.
  int history_len = 0;
  /// Fractions are drawn from (s_clip, 1 - s_clip).
  double s_clip = 1e-3;

  friend bool operator==(const SamplerConfig&, const SamplerConfig&) = default;
};

void validate(const SamplerConfig& cfg);

/// One training example: a noised point on the bridge between observations
/// `segment` and `segment + 1` of trajectory `traj_index`.
struct BridgeSample {
  double t_abs = 0.0;
  double s = 0.0;
  Vector x_t;
  Vector x_next;
  double dt_seg = 0.0;
  Matrix history;
  Vector cond;
  Vector u_target;
  Index traj_index = 0;
  Index segment = 0;

  /// Time left until the next observation, (1 - s) * dt_seg.
  double remaining() const { return (1.0 - s) * dt_seg; }
};

/// Rows are observations segment-h .. segment-1 (0-based); positions before
/// the start of the trajectory repeat the first observation.
Matrix assemble_history(const Matrix& states, Index segment, int history_len);
inline Matrix assemble_history(const Trajectory& traj, Index segment, int history_len) {
  return assemble_history(traj.states, segment, history_len);
}

/// Bridge sample at a fixed segment and fraction.
BridgeSample sample_bridge_at(const Trajectory& traj, Index segment, double s, const SamplerConfig& cfg, Rng& rng);

/// Segment uniform over the T-1 segments, s uniform over (s_clip, 1 - s_clip).
BridgeSample sample_bridge(const Trajectory& traj, const SamplerConfig& cfg, Rng& rng);

/// `count` samples, each from a uniformly chosen trajectory.
std::vector<BridgeSample> sample_batch(const Dataset& ds, const SamplerConfig& cfg, Index count, Rng& rng);

/// Smallest denominator used when turning a predicted target into a velocity.
inline constexpr double kRemainingFloor = 1e-4;

/// (x_hat - x_t) / max(remaining, kRemainingFloor); sets *clamped when the
/// floor was applied.
Vector velocity_from_target(const Vector& x_hat, const Vector& x_t, double remaining, bool* clamped = nullptr);

}  // namespace tfm
