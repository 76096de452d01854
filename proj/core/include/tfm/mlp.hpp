#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "tfm/data.hpp"

namespace tfm {

enum class Activation { Tanh, Relu, Selu };

std::string to_string(Activation act);
Activation parse_activation(const std::string& name);

struct MlpConfig {
  Index in_dim = 1;
  Index out_dim = 1;
  Index hidden_dim = 64;
  int n_hidden_layers = 2;
  Activation activation = Activation::Tanh;
  std::uint64_t seed = 0;

  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

/// Affine layer with gradient buffers of identical shape.
/// weight is (out x in); batches are laid out one sample per row.
struct Layer {
  Matrix weight;
  Vector bias;
  Matrix grad_weight;
  Vector grad_bias;
};

/// Activations recorded by a forward pass; required by backward.
struct ForwardCache {
  std::vector<Matrix> layer_inputs;
  std::vector<Matrix> pre_activations;
};

class Mlp {
 public:
  /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)) from a stream seeded by
  /// config.seed; biases and gradients zero.
  explicit Mlp(const MlpConfig& config);

  const MlpConfig& config() const { return config_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  Index parameter_count() const;
  /// Layer order, each layer's weight row-major followed by its bias.
  Vector flat_parameters() const;
  void set_flat_parameters(const Vector& params);
  Vector flat_gradients() const;
  void zero_grad();

  /// x is (batch x in_dim). Throws std::invalid_argument on width mismatch or
  /// non-finite input. Fills `cache` when given.
  Matrix forward(const Matrix& x, ForwardCache* cache = nullptr) const;

  /// Accumulates parameter gradients of the scalar loss whose output gradient
  /// is `grad_out` and returns dL/dx.
  Matrix backward(const ForwardCache& cache, const Matrix& grad_out);

 private:
  MlpConfig config_;
  std::vector<Layer> layers_;
};

bool bitwise_equal(const Mlp& a, const Mlp& b);

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Matrix> m_weight, v_weight;
  std::vector<Vector> m_bias, v_bias;

  static AdamState for_model(const Mlp& model, double lr = 1e-3);
};

/// Bias-corrected Adam update; increments the step counter and zeroes the
/// gradient buffers. Throws std::runtime_error naming the layer on a
/// non-finite gradient.
void adam_step(Mlp& model, AdamState& state);

/// Scalar loss of a network output; writes dL/dout into `grad_out` when given.
using LossFn = std::function<double(const Matrix& out, Matrix* grad_out)>;
/// Fills the model's gradient buffers from a forward cache and dL/dout.
using GradientFn = std::function<void(Mlp& model, const ForwardCache& cache, const Matrix& grad_out)>;

/// Denominator floor of the per-parameter relative error in gradcheck.
inline constexpr double kGradcheckFloor = 1e-6;

/// Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|,
/// floor), numeric being the central difference with `step`. `analytic`
/// defaults to Mlp::backward. Leaves parameters unchanged and gradients zeroed.
double gradcheck(Mlp& model, const LossFn& loss, const Matrix& x, const GradientFn& analytic = {},
                 double step = 1e-5);

// Checkpoint: "TFMMLP01", u32 version, u32 activation, u64 in/out/hidden/
// layers/seed, u64 parameter count, then flat_parameters() as little-endian
// doubles.
void save_checkpoint(const Mlp& model, std::ostream& out);
void save_checkpoint(const Mlp& model, const std::filesystem::path& path);
Mlp load_checkpoint(std::istream& in);
Mlp load_checkpoint(const std::filesystem::path& path);

}  // namespace tfm
