#include "tfm/bridge.hpp"

#include <cmath>
#include <stdexcept>

namespace tfm {

void validate(const SamplerConfig& cfg) {
  if (!(cfg.sigma >= 0.0)) throw std::invalid_argument("sampler sigma must be >= 0");
  if (cfg.history_len < 0) throw std::invalid_argument("history length must be >= 0");
  if (!(cfg.s_clip > 0.0 && cfg.s_clip < 0.5)) throw std::invalid_argument("s_clip must lie in (0, 0.5)");
}

Matrix assemble_history(const Matrix& states, Index segment, int history_len) {
  Matrix hist(history_len, states.cols());
  for (int r = 0; r < history_len; ++r) {
    const Index src = segment - history_len + r;
    hist.row(r) = states.row(src < 0 ? 0 : src);
  }
  return hist;
}

BridgeSample sample_bridge_at(const Trajectory& traj, Index segment, double s, const SamplerConfig& cfg, Rng& rng) {
  if (segment < 0 || segment + 1 >= traj.length()) throw std::out_of_range("segment index out of range");
  BridgeSample out;
  out.segment = segment;
  out.s = s;
  out.dt_seg = traj.times[segment + 1] - traj.times[segment];
  out.t_abs = traj.times[segment] + s * out.dt_seg;
  out.x_next = traj.states.row(segment + 1).transpose();
  const Vector mu = (1.0 - s) * traj.states.row(segment).transpose() + s * out.x_next;

  const double scale = cfg.sigma * std::sqrt(s * (1.0 - s));
  std::normal_distribution<double> normal;
  out.x_t = mu;
  for (Index j = 0; j < mu.size(); ++j) out.x_t[j] += scale * normal(rng);

  out.u_target = (out.x_next - out.x_t) / out.remaining();
  out.history = assemble_history(traj, segment, cfg.history_len);
  out.cond = traj.cond;
  return out;
}

BridgeSample sample_bridge(const Trajectory& traj, const SamplerConfig& cfg, Rng& rng) {
  std::uniform_int_distribution<Index> pick_segment(0, traj.length() - 2);
  std::uniform_real_distribution<double> pick_s(cfg.s_clip, 1.0 - cfg.s_clip);
  const Index segment = pick_segment(rng);
  const double s = pick_s(rng);
  return sample_bridge_at(traj, segment, s, cfg, rng);
}

std::vector<BridgeSample> sample_batch(const Dataset& ds, const SamplerConfig& cfg, Index count, Rng& rng) {
  if (ds.empty()) throw DataError("no trajectories");
  std::uniform_int_distribution<std::size_t> pick_traj(0, ds.size() - 1);
  std::vector<BridgeSample> batch;
  batch.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    const auto idx = pick_traj(rng);
    auto sample = sample_bridge(ds.trajectories[idx], cfg, rng);
    sample.traj_index = static_cast<Index>(idx);
    batch.push_back(std::move(sample));
  }
  return batch;
}

Vector velocity_from_target(const Vector& x_hat, const Vector& x_t, double remaining, bool* clamped) {
  const bool floor_hit = !(remaining >= kRemainingFloor);
  if (clamped) *clamped = floor_hit;
  return (x_hat - x_t) / (floor_hit ? kRemainingFloor : remaining);
}

}  // namespace tfm
