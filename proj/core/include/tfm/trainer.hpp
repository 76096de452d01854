#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tfm/model.hpp"

namespace tfm {

struct LossWeights {
  double target = 1.0;
  double sigma = 0.0;
  double time = 0.0;
};

struct TrainConfig {
  double lr = 1e-3;
  Index batch_size = 64;
  int max_epochs = 1000;
  int patience = 3;
  /// 0 selects max(1, transitions / batch_size).
  int steps_per_epoch = 0;
  /// Size of the fixed validation sample set.
  Index val_samples = 512;
  std::uint64_t seed = 0;
  LossWeights weights;
};

void validate(const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double loss_target = 0.0;
  double loss_sigma = 0.0;
  double loss_time = 0.0;
  double loss_total = 0.0;
  double val_target = 0.0;
  double val_sigma = 0.0;
  double val_time = 0.0;
  double val_total = 0.0;
};

enum class StopReason { NotStarted, MaxEpochs, EarlyStopped, Diverged };
std::string to_string(StopReason reason);

struct TrainReport {
  std::vector<EpochRecord> epochs;
  /// Index into `epochs` of the restored parameters, -1 when nothing ran.
  int best_epoch = -1;
  StopReason stop = StopReason::NotStarted;
  std::string message;
};

struct LossResult {
  double loss = 0.0;
  Matrix output;
};

/// Mean over samples of ||x_hat - x_next||^2. Gradients of grad_scale * loss
/// are accumulated into the predictor; grad_scale == 0 skips the backward pass.
LossResult target_loss(TfmModel& model, const Matrix& inputs, const std::vector<BridgeSample>& batch,
                       double grad_scale = 1.0);
LossResult target_loss(TfmModel& model, const std::vector<BridgeSample>& batch, double grad_scale = 1.0);

/// Regresses the sigma head onto the squared error of `predictions`, which are
/// treated as constants. Loss and output are in units of norm.error_unit.
LossResult uncertainty_loss(TfmModel& model, const Matrix& inputs, const std::vector<BridgeSample>& batch,
                            const Matrix& predictions, double grad_scale = 1.0);

/// Mean squared error between the time head and (1 - s) * dt_seg, in units of
/// norm.interval_unit.
LossResult time_loss(TfmModel& model, const Matrix& inputs, const std::vector<BridgeSample>& batch,
                     double grad_scale = 1.0);

/// Per-sample regression targets of the sigma head (rows = samples).
Matrix squared_error_targets(const TfmModel& model, const std::vector<BridgeSample>& batch, const Matrix& predictions);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Simulation-free training of all three heads on bridge samples, with early
/// stopping on a fixed validation sample set. The best-epoch parameters are
/// restored before returning.
TrainReport train(TfmModel& model, const Dataset& train_ds, const Dataset& val_ds, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace tfm
