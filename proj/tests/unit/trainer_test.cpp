#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tfm/trainer.hpp"

namespace tfm {
namespace {

ModelConfig small_model_config(const Dataset& ds, int history = 2) {
  ModelConfig mc;
  mc.dim_state = ds.dim_state;
  mc.dim_cond = ds.dim_cond;
  mc.sampler.sigma = 0.1;
  mc.sampler.history_len = history;
  mc.hidden_dim = 16;
  mc.n_hidden_layers = 2;
  mc.seed = 3;
  return mc;
}

Dataset random_dataset(std::uint64_t seed, Index d = 2, Index e = 1) {
  auto rng = make_stream(seed, "random_dataset");
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> gap(0.02, 0.3);
  std::vector<Trajectory> trajs;
  for (int i = 0; i < 4; ++i) {
    const Index T = 6 + i;
    Trajectory t{"r" + std::to_string(i), Vector(T), Matrix(T, d), Vector(e)};
    double clock = 0.0;
    for (Index r = 0; r < T; ++r) {
      t.times[r] = clock;
      clock += gap(rng);
      for (Index j = 0; j < d; ++j) t.states(r, j) = normal(rng);
    }
    for (Index j = 0; j < e; ++j) t.cond[j] = normal(rng);
    trajs.push_back(t);
  }
  return make_dataset(trajs);
}

Dataset constant_dataset(double value, double dt, Index T = 20) {
  Trajectory t{"const", Vector(T), Matrix::Constant(T, 1, value), Vector()};
  for (Index i = 0; i < T; ++i) t.times[i] = dt * i;
  return make_dataset({t});
}

TEST(TargetLoss, ZeroForExactPredictor) {
  const auto ds = constant_dataset(0.7, 0.01);
  auto model = make_model(small_model_config(ds), ds.norm);
  oracle::make_constant(model.predictor, Vector::Constant(1, 0.7));
  auto rng = make_stream(0, "b");
  const auto batch = sample_batch(ds, model.config.sampler, 32, rng);
  EXPECT_EQ(target_loss(model, batch).loss, 0.0);
}

TEST(TargetLoss, ConstantTargetArithmetic) {
  const auto ds = constant_dataset(-2.0, 0.01);
  auto model = make_model(small_model_config(ds), ds.norm);
  oracle::make_constant(model.predictor, Vector::Zero(1));
  auto rng = make_stream(0, "b");
  const auto batch = sample_batch(ds, model.config.sampler, 32, rng);
  EXPECT_DOUBLE_EQ(target_loss(model, batch).loss, 4.0);
}

TEST(TargetLoss, GradientEqualsWeightedVelocityLossGradient) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto ds = random_dataset(seed);
    auto model = make_model(small_model_config(ds), ds.norm);
    auto rng = make_stream(seed, "prop");
    const auto batch = sample_batch(ds, model.config.sampler, 16, rng);
    model.predictor.zero_grad();
    target_loss(model, batch);
    const Vector via_target = model.predictor.flat_gradients();
    const Vector via_velocity = oracle::weighted_velocity_loss_gradient(model, batch);
    EXPECT_LT(oracle::max_relative_error(via_target, via_velocity), 1e-10);
  }
}

TEST(TargetLoss, VelocityMapComposesToSameGradient) {
  // Same check routed through velocity_from_target for samples away from the
  // clamp floor.
  const auto ds = random_dataset(21);
  auto model = make_model(small_model_config(ds), ds.norm);
  auto rng = make_stream(21, "compose");
  const auto batch = sample_batch(ds, model.config.sampler, 16, rng);
  ForwardCache cache;
  model.predictor.zero_grad();
  const Matrix x_hat = model.predictor.forward(build_inputs(model, batch), &cache);
  Matrix grad(x_hat.rows(), x_hat.cols());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    const double r = s.remaining();
    ASSERT_GT(r, kRemainingFloor);
    const Vector v = velocity_from_target(x_hat.row(static_cast<Index>(i)).transpose(), s.x_t, r);
    grad.row(static_cast<Index>(i)) = (2.0 * r / static_cast<double>(batch.size())) * (v - s.u_target).transpose();
  }
  model.predictor.backward(cache, grad);
  const Vector composed = model.predictor.flat_gradients();
  model.predictor.zero_grad();
  target_loss(model, batch);
  EXPECT_LT(oracle::max_relative_error(model.predictor.flat_gradients(), composed), 1e-10);
}

TEST(UncertaintyLoss, PerfectPredictorAndZeroHead) {
  const auto ds = constant_dataset(1.5, 0.01);
  auto model = make_model(small_model_config(ds), ds.norm);
  oracle::make_constant(model.predictor, Vector::Constant(1, 1.5));
  oracle::make_constant(model.sigma_head, Vector::Zero(1));
  auto rng = make_stream(1, "u");
  const auto batch = sample_batch(ds, model.config.sampler, 32, rng);
  const Matrix inputs = build_inputs(model, batch);
  const auto pred = target_loss(model, inputs, batch, 0.0);
  EXPECT_TRUE((squared_error_targets(model, batch, pred.output).array() == 0.0).all());
  EXPECT_EQ(uncertainty_loss(model, inputs, batch, pred.output).loss, 0.0);
}

TEST(UncertaintyLoss, ConstantErrorMatchedByHead) {
  const auto ds = constant_dataset(1.0, 0.01);
  auto model = make_model(small_model_config(ds), ds.norm);
  oracle::make_constant(model.predictor, Vector::Constant(1, 1.5));
  oracle::make_constant(model.sigma_head, Vector::Constant(1, 0.25));
  auto rng = make_stream(2, "u");
  const auto batch = sample_batch(ds, model.config.sampler, 32, rng);
  const Matrix inputs = build_inputs(model, batch);
  const auto pred = target_loss(model, inputs, batch, 0.0);
  EXPECT_EQ(uncertainty_loss(model, inputs, batch, pred.output).loss, 0.0);
}

TEST(UncertaintyLoss, DoesNotTouchPredictorGradients) {
  const auto ds = random_dataset(4);
  auto model = make_model(small_model_config(ds), ds.norm);
  auto rng = make_stream(4, "u");
  const auto batch = sample_batch(ds, model.config.sampler, 16, rng);
  const Matrix inputs = build_inputs(model, batch);
  const auto pred = target_loss(model, inputs, batch, 0.0);
  uncertainty_loss(model, inputs, batch, pred.output, 1.0);
  time_loss(model, inputs, batch, 1.0);
  EXPECT_TRUE((model.predictor.flat_gradients().array() == 0.0).all());
  EXPECT_GT(model.sigma_head.flat_gradients().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(model.time_head.flat_gradients().cwiseAbs().maxCoeff(), 0.0);
}

TEST(TimeLoss, RegularGridMidpoints) {
  const auto ds = constant_dataset(0.0, 0.01);
  auto model = make_model(small_model_config(ds), ds.norm);
  auto rng = make_stream(3, "t");
  std::vector<BridgeSample> batch;
  for (Index k = 0; k < 19; ++k) batch.push_back(sample_bridge_at(ds.trajectories[0], k, 0.5, model.config.sampler, rng));
  for (const auto& s : batch) EXPECT_NEAR(s.remaining(), 0.005, 1e-15);
  const Matrix inputs = build_inputs(model, batch);
  oracle::make_constant(model.time_head, Vector::Constant(1, 0.005));
  EXPECT_LT(time_loss(model, inputs, batch).loss, 1e-30);
}

TEST(TimeLoss, ZeroHeadGivesMeanSquaredRemaining) {
  const auto ds = random_dataset(5);
  auto model = make_model(small_model_config(ds), ds.norm);
  oracle::make_constant(model.time_head, Vector::Zero(1));
  auto rng = make_stream(5, "t");
  const auto batch = sample_batch(ds, model.config.sampler, 64, rng);
  double m = 0.0;
  for (const auto& s : batch) m += s.remaining() * s.remaining();
  m /= static_cast<double>(batch.size());
  EXPECT_NEAR(time_loss(model, build_inputs(model, batch), batch).loss, m, 1e-15);
}

TEST(Losses, AuxiliaryWeightsNeverChangePredictorGradients) {
  const auto ds = random_dataset(6);
  auto rng = make_stream(6, "iso");
  auto base = make_model(small_model_config(ds), ds.norm);
  const auto batch = sample_batch(ds, base.config.sampler, 32, rng);
  Vector reference;
  for (double w_aux : {0.0, 0.5, 3.0}) {
    auto model = base;
    const Matrix inputs = build_inputs(model, batch);
    const auto pred = target_loss(model, inputs, batch, 1.0);
    uncertainty_loss(model, inputs, batch, pred.output, w_aux);
    time_loss(model, inputs, batch, w_aux);
    const Vector g = model.predictor.flat_gradients();
    if (reference.size() == 0) reference = g;
    EXPECT_EQ(g, reference);
  }
}

TEST(SigmaPerDim, TargetsPerDimension) {
  const auto ds = random_dataset(7);
  auto mc = small_model_config(ds);
  mc.sigma_per_dim = true;
  auto model = make_model(mc, ds.norm);
  EXPECT_EQ(model.sigma_head.config().out_dim, ds.dim_state);
  auto rng = make_stream(7, "pd");
  const auto batch = sample_batch(ds, model.config.sampler, 8, rng);
  const Matrix pred = model.predictor.forward(build_inputs(model, batch));
  const Matrix per_dim = squared_error_targets(model, batch, pred);
  EXPECT_EQ(per_dim.cols(), ds.dim_state);
  EXPECT_NEAR(per_dim(0, 0) + per_dim(0, 1), (pred.row(0).transpose() - batch[0].x_next).squaredNorm(), 1e-14);
}

TrainConfig quick_train_config() {
  TrainConfig cfg;
  cfg.lr = 3e-3;
  cfg.batch_size = 16;
  cfg.max_epochs = 15;
  cfg.patience = 100;
  cfg.steps_per_epoch = 10;
  cfg.val_samples = 64;
  cfg.seed = 9;
  cfg.weights = {1.0, 0.5, 0.5};
  return cfg;
}

TEST(Train, ZeroEpochsIsANoOp) {
  const auto ds = normalize_dataset(random_dataset(8));
  auto model = make_model(small_model_config(ds), ds.norm);
  const auto before = model;
  auto cfg = quick_train_config();
  cfg.max_epochs = 0;
  const auto report = train(model, ds, ds, cfg);
  EXPECT_TRUE(report.epochs.empty());
  EXPECT_EQ(report.best_epoch, -1);
  EXPECT_TRUE(bitwise_equal(model.predictor, before.predictor));
  EXPECT_TRUE(bitwise_equal(model.sigma_head, before.sigma_head));
  EXPECT_TRUE(bitwise_equal(model.time_head, before.time_head));
}

TEST(Train, DeterministicGivenSeed) {
  const auto ds = normalize_dataset(random_dataset(10));
  auto a = make_model(small_model_config(ds), ds.norm);
  auto b = make_model(small_model_config(ds), ds.norm);
  const auto ra = train(a, ds, ds, quick_train_config());
  const auto rb = train(b, ds, ds, quick_train_config());
  ASSERT_EQ(ra.epochs.size(), rb.epochs.size());
  for (std::size_t i = 0; i < ra.epochs.size(); ++i) {
    EXPECT_EQ(ra.epochs[i].loss_total, rb.epochs[i].loss_total);
    EXPECT_EQ(ra.epochs[i].val_total, rb.epochs[i].val_total);
  }
  EXPECT_TRUE(bitwise_equal(a.predictor, b.predictor));
  EXPECT_TRUE(bitwise_equal(a.time_head, b.time_head));
}

TEST(Train, LossDecreasesAndBestEpochIsRestored) {
  const auto ds = normalize_dataset(random_dataset(12));
  auto model = make_model(small_model_config(ds), ds.norm);
  auto cfg = quick_train_config();
  cfg.max_epochs = 40;
  cfg.patience = 3;
  std::vector<double> seen;
  const auto report = train(model, ds, ds, cfg, [&](const EpochRecord& r) { seen.push_back(r.val_total); });
  ASSERT_FALSE(report.epochs.empty());
  EXPECT_EQ(seen.size(), report.epochs.size());
  ASSERT_GE(report.best_epoch, 0);
  const double best = report.epochs[static_cast<std::size_t>(report.best_epoch)].val_total;
  for (const auto& e : report.epochs) EXPECT_LE(best, e.val_total);
  EXPECT_LT(best, report.epochs.front().val_total);
  if (report.stop == StopReason::EarlyStopped) {
    EXPECT_EQ(static_cast<int>(report.epochs.size()) - 1 - report.best_epoch, cfg.patience);
  }
  EXPECT_TRUE(model.sigma_head_trained);
  EXPECT_TRUE(model.time_head_trained);

  // Restored parameters reproduce the best validation loss.
  auto rng = make_stream(cfg.seed, "validation");
  const auto val = sample_batch(ds, model.config.sampler, cfg.val_samples, rng);
  const Matrix inputs = build_inputs(model, val);
  const auto tgt = target_loss(model, inputs, val, 0.0);
  const double total = tgt.loss + 0.5 * uncertainty_loss(model, inputs, val, tgt.output, 0.0).loss +
                       0.5 * time_loss(model, inputs, val, 0.0).loss;
  EXPECT_NEAR(total, best, 1e-12 * std::max(1.0, best));
}

TEST(Train, DivergenceAbortsWithReport) {
  const auto ds = normalize_dataset(random_dataset(13));
  auto model = make_model(small_model_config(ds), ds.norm);
  auto cfg = quick_train_config();
  cfg.lr = 1e200;
  const auto report = train(model, ds, ds, cfg);
  EXPECT_EQ(report.stop, StopReason::Diverged);
  EXPECT_FALSE(report.message.empty());
  EXPECT_TRUE(model.predictor.flat_parameters().allFinite());
}

TEST(Train, RejectsMismatchedNormalization) {
  const auto raw = random_dataset(14);
  const auto ds = normalize_dataset(raw);
  auto model = make_model(small_model_config(ds), NormStats::identity(ds.dim_state));
  EXPECT_THROW(train(model, ds, ds, quick_train_config()), std::invalid_argument);
}

TEST(TrainConfig, Validation) {
  auto cfg = quick_train_config();
  cfg.patience = 0;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
  cfg = quick_train_config();
  cfg.weights = {0.0, 0.0, 0.0};
  EXPECT_THROW(validate(cfg), std::invalid_argument);
  cfg = quick_train_config();
  cfg.weights.sigma = -1.0;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
}

TEST(Model, InputLayout) {
  const auto ds = random_dataset(15, 2, 1);
  auto mc = small_model_config(ds, 3);
  EXPECT_EQ(model_input_dim(mc), 1 + 2 + 3 * 2 + 1);
  mc.use_cond = false;
  EXPECT_EQ(model_input_dim(mc), 1 + 2 + 3 * 2);
  const auto model = make_model(small_model_config(ds, 3), ds.norm);
  Matrix hist(3, 2);
  hist << 1, 2, 3, 4, 5, 6;
  Vector x(2);
  x << 7, 8;
  const Matrix row = model_input(model, 0.25, x, hist, Vector::Constant(1, 9));
  Matrix expect(1, 10);
  expect << 0.25, 7, 8, 1, 2, 3, 4, 5, 6, 9;
  EXPECT_EQ(row, expect);
  EXPECT_EQ(model.predictor.config().in_dim, 10);
  EXPECT_EQ(model.sigma_head.config().in_dim, 10);
  EXPECT_EQ(model.time_head.config().in_dim, 10);
  EXPECT_FALSE(bitwise_equal(model.predictor, model.time_head));
}

}  // namespace
}  // namespace tfm
