#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tfm/rollout.hpp"

namespace tfm {

struct MetricReport {
  double mean_mse = 0.0;
  double rbf_mmd = 0.0;
  std::optional<double> uncertainty_mse;
  std::vector<std::string> traj_ids;
  std::vector<double> per_traj_mse;
  std::vector<double> per_traj_mmd;
};

/// Average squared Euclidean error over observations 2..T (the first
/// observation is given). Throws std::invalid_argument when the prediction is
/// incomplete or not aligned with the observation times.
double mean_mse(const RolloutResult& pred, const Trajectory& truth);

/// Trajectory average of mean_mse; results are matched to trajectories by
/// position.
double mean_mse(const std::vector<RolloutResult>& preds, const Dataset& truth);

/// Multipliers of the median pairwise distance.
inline const std::vector<double> kBandwidthLadder{0.25, 0.5, 1.0, 2.0, 4.0};

/// Median Euclidean distance over distinct row pairs (at most 2000 rows are
/// used, strided). Returns 1 when the median is zero or undefined.
double median_pairwise_distance(const Matrix& pool);

std::vector<double> bandwidth_ladder(const Matrix& pool, const std::vector<double>& multipliers = kBandwidthLadder);

/// Biased (V-statistic) squared MMD with kernel exp(-|a-b|^2 / (2 h^2)),
/// averaged over the bandwidths. Rows are samples. Exactly symmetric in its
/// two sample sets.
double rbf_mmd(const Matrix& a, const Matrix& b, const std::vector<double>& bandwidths);

/// Increment-distribution discrepancy averaged over observation indices
/// 2..T_max. ensembles[i] holds aligned rollouts of truth.trajectories[i]. At
/// each index the predicted increments x_hat_t - x_{t-1} of every draw are
/// compared with the true increments of every trajectory long enough to have
/// that index. Bandwidths come from the pooled true increments.
double increment_mmd(const std::vector<std::vector<RolloutResult>>& ensembles, const Dataset& truth,
                     std::vector<double>* per_traj = nullptr);

/// Mean over fresh bridge samples of (sigma head - realized squared error)^2.
double uncertainty_mse(const TfmModel& model, const Dataset& ds, Index n_samples, std::uint64_t seed);

}  // namespace tfm
