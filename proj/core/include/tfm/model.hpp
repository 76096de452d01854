#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tfm/bridge.hpp"
#include "tfm/mlp.hpp"

namespace tfm {

enum class DynamicsMode { Ode, Sde };

std::string to_string(DynamicsMode mode);
DynamicsMode parse_dynamics_mode(const std::string& name);

struct ModelConfig {
  Index dim_state = 1;
  Index dim_cond = 0;
  SamplerConfig sampler;
  Index hidden_dim = 256;
  int n_hidden_layers = 2;
  Activation activation = Activation::Tanh;
  /// Feed the static condition vector to the heads.
  bool use_cond = true;
  /// Predict one squared error per state dimension instead of a scalar.
  bool sigma_per_dim = false;
  DynamicsMode mode = DynamicsMode::Ode;
  std::uint64_t seed = 0;
};

/// The three heads plus the constants needed to use them. Every head reads the
/// same input row [t, x, flattened history, cond].
struct TfmModel {
  ModelConfig config;
  NormStats norm;
  Mlp predictor;
  Mlp sigma_head;
  Mlp time_head;
  bool sigma_head_trained = false;
  bool time_head_trained = false;

  Index input_dim() const;
  Index dim_state() const { return config.dim_state; }
  int history_len() const { return config.sampler.history_len; }
};

Index model_input_dim(const ModelConfig& cfg);

/// Heads are seeded from independent streams of cfg.seed.
TfmModel make_model(const ModelConfig& cfg, const NormStats& norm);

/// One input row for a single evaluation point.
Matrix model_input(const TfmModel& model, double t_abs, const Vector& x, const Matrix& history, const Vector& cond);

/// One input row per bridge sample.
Matrix build_inputs(const TfmModel& model, const std::vector<BridgeSample>& batch);

/// Sigma-head outputs converted to squared normalized error.
Matrix predicted_squared_error(const TfmModel& model, const Matrix& inputs);
/// Time-head outputs converted to normalized time, not floored.
Vector predicted_remaining(const TfmModel& model, const Matrix& inputs);

}  // namespace tfm
