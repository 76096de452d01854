#include "tfm/trainer.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace tfm {

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::NotStarted:
      return "not_started";
    case StopReason::MaxEpochs:
      return "max_epochs";
    case StopReason::EarlyStopped:
      return "early_stopped";
    case StopReason::Diverged:
      return "diverged";
  }
  return "unknown";
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be positive");
  if (cfg.max_epochs < 0) throw std::invalid_argument("max_epochs must be >= 0");
  if (cfg.patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (cfg.steps_per_epoch < 0) throw std::invalid_argument("steps_per_epoch must be >= 0");
  if (cfg.val_samples < 1) throw std::invalid_argument("val_samples must be positive");
  const auto& w = cfg.weights;
  if (w.target < 0.0 || w.sigma < 0.0 || w.time < 0.0) throw std::invalid_argument("loss weights must be nonnegative");
  if (!(w.target > 0.0 || w.sigma > 0.0 || w.time > 0.0)) throw std::invalid_argument("at least one loss weight must be positive");
}

namespace {

void require_finite(const Matrix& out, const char* head) {
  if (!out.allFinite()) throw std::runtime_error(std::string("non-finite output from ") + head);
}

// Squared-error loss of `out` against `target`, averaged over rows, with the
// scaled gradient pushed through `head`.
double regress(Mlp& head, const Matrix& inputs, const Matrix& target, double grad_scale, Matrix& out,
               const char* name) {
  ForwardCache cache;
  out = head.forward(inputs, grad_scale != 0.0 ? &cache : nullptr);
  require_finite(out, name);
  const Matrix diff = out - target;
  const double batch = static_cast<double>(inputs.rows());
  if (grad_scale != 0.0) head.backward(cache, (2.0 * grad_scale / batch) * diff);
  return diff.squaredNorm() / batch;
}

struct Snapshot {
  Vector predictor, sigma_head, time_head;
};

Snapshot take_snapshot(const TfmModel& m) {
  return {m.predictor.flat_parameters(), m.sigma_head.flat_parameters(), m.time_head.flat_parameters()};
}

void restore(TfmModel& m, const Snapshot& s) {
  m.predictor.set_flat_parameters(s.predictor);
  m.sigma_head.set_flat_parameters(s.sigma_head);
  m.time_head.set_flat_parameters(s.time_head);
  m.predictor.zero_grad();
  m.sigma_head.zero_grad();
  m.time_head.zero_grad();
}

struct StepLosses {
  double target = 0.0, sigma = 0.0, time = 0.0;
  double total(const LossWeights& w) const { return w.target * target + w.sigma * sigma + w.time * time; }
};

StepLosses evaluate_losses(TfmModel& m, const Matrix& inputs, const std::vector<BridgeSample>& batch,
                           const LossWeights& w, bool accumulate) {
  StepLosses out;
  const auto tgt = target_loss(m, inputs, batch, accumulate ? w.target : 0.0);
  out.target = tgt.loss;
  if (w.sigma > 0.0) out.sigma = uncertainty_loss(m, inputs, batch, tgt.output, accumulate ? w.sigma : 0.0).loss;
  if (w.time > 0.0) out.time = time_loss(m, inputs, batch, accumulate ? w.time : 0.0).loss;
  return out;
}

}  // namespace

LossResult target_loss(TfmModel& model, const Matrix& inputs, const std::vector<BridgeSample>& batch,
                       double grad_scale) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  Matrix target(static_cast<Index>(batch.size()), model.dim_state());
  for (std::size_t i = 0; i < batch.size(); ++i) target.row(static_cast<Index>(i)) = batch[i].x_next.transpose();
  LossResult r;
  r.loss = regress(model.predictor, inputs, target, grad_scale, r.output, "predictor");
  return r;
}

LossResult target_loss(TfmModel& model, const std::vector<BridgeSample>& batch, double grad_scale) {
  return target_loss(model, build_inputs(model, batch), batch, grad_scale);
}

Matrix squared_error_targets(const TfmModel& model, const std::vector<BridgeSample>& batch, const Matrix& predictions) {
  const Index n = static_cast<Index>(batch.size());
  Matrix sq(n, model.dim_state());
  for (Index i = 0; i < n; ++i) {
    sq.row(i) = (predictions.row(i) - batch[static_cast<std::size_t>(i)].x_next.transpose()).array().square().matrix();
  }
  if (model.config.sigma_per_dim) return sq;
  return sq.rowwise().sum();
}

LossResult uncertainty_loss(TfmModel& model, const Matrix& inputs, const std::vector<BridgeSample>& batch,
                            const Matrix& predictions, double grad_scale) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const Matrix target = squared_error_targets(model, batch, predictions) / model.norm.error_unit;
  LossResult r;
  r.loss = regress(model.sigma_head, inputs, target, grad_scale, r.output, "sigma head");
  return r;
}

LossResult time_loss(TfmModel& model, const Matrix& inputs, const std::vector<BridgeSample>& batch,
                     double grad_scale) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  Matrix target(static_cast<Index>(batch.size()), 1);
  for (std::size_t i = 0; i < batch.size(); ++i) target(static_cast<Index>(i), 0) = batch[i].remaining() / model.norm.interval_unit;
  LossResult r;
  r.loss = regress(model.time_head, inputs, target, grad_scale, r.output, "time head");
  return r;
}

TrainReport train(TfmModel& model, const Dataset& train_ds, const Dataset& val_ds, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  validate(cfg);
  TrainReport report;
  if (cfg.max_epochs == 0) return report;
  if (train_ds.empty() || val_ds.empty()) throw DataError("no trajectories");
  for (const Dataset* ds : {&train_ds, &val_ds}) {
    if (ds->dim_state != model.dim_state() || ds->dim_cond != model.config.dim_cond) {
      throw std::invalid_argument("dataset dimensions do not match the model");
    }
    if (!(ds->norm == model.norm)) throw std::invalid_argument("dataset was not normalized with the model's statistics");
  }

  const auto& w = cfg.weights;
  const auto& sampler = model.config.sampler;
  auto val_rng = make_stream(cfg.seed, "validation");
  const auto val_batch = sample_batch(val_ds, sampler, cfg.val_samples, val_rng);
  const Matrix val_inputs = build_inputs(model, val_batch);
  auto batch_rng = make_stream(cfg.seed, "train_batches");

  const int steps = cfg.steps_per_epoch > 0
                        ? cfg.steps_per_epoch
                        : static_cast<int>(std::max<Index>(1, train_ds.transition_count() / cfg.batch_size));

  auto opt_predictor = AdamState::for_model(model.predictor, cfg.lr);
  auto opt_sigma = AdamState::for_model(model.sigma_head, cfg.lr);
  auto opt_time = AdamState::for_model(model.time_head, cfg.lr);
  model.predictor.zero_grad();
  model.sigma_head.zero_grad();
  model.time_head.zero_grad();

  double best_val = std::numeric_limits<double>::infinity();
  Snapshot best = take_snapshot(model);
  int since_best = 0;
  report.stop = StopReason::MaxEpochs;

  try {
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
      StepLosses sum;
      for (int step = 0; step < steps; ++step) {
        const auto batch = sample_batch(train_ds, sampler, cfg.batch_size, batch_rng);
        const Matrix inputs = build_inputs(model, batch);
        const auto losses = evaluate_losses(model, inputs, batch, w, true);
        if (!std::isfinite(losses.total(w))) throw std::runtime_error("non-finite training loss");
        if (w.target > 0.0) adam_step(model.predictor, opt_predictor);
        if (w.sigma > 0.0) adam_step(model.sigma_head, opt_sigma);
        if (w.time > 0.0) adam_step(model.time_head, opt_time);
        sum.target += losses.target;
        sum.sigma += losses.sigma;
        sum.time += losses.time;
      }
      const auto val = evaluate_losses(model, val_inputs, val_batch, w, false);

      EpochRecord rec;
      rec.epoch = epoch;
      rec.loss_target = sum.target / steps;
      rec.loss_sigma = sum.sigma / steps;
      rec.loss_time = sum.time / steps;
      rec.loss_total = w.target * rec.loss_target + w.sigma * rec.loss_sigma + w.time * rec.loss_time;
      rec.val_target = val.target;
      rec.val_sigma = val.sigma;
      rec.val_time = val.time;
      rec.val_total = val.total(w);
      if (!std::isfinite(rec.val_total)) throw std::runtime_error("non-finite validation loss");
      report.epochs.push_back(rec);
      if (on_epoch) on_epoch(rec);

      if (rec.val_total < best_val) {
        best_val = rec.val_total;
        best = take_snapshot(model);
        report.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        report.stop = StopReason::EarlyStopped;
        break;
      }
    }
  } catch (const std::runtime_error& err) {
    report.stop = StopReason::Diverged;
    report.message = err.what();
  }

  restore(model, best);
  if (report.best_epoch >= 0) {
    model.sigma_head_trained = model.sigma_head_trained || w.sigma > 0.0;
    model.time_head_trained = model.time_head_trained || w.time > 0.0;
  }
  return report;
}

}  // namespace tfm
