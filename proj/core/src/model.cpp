#include "tfm/model.hpp"

#include <stdexcept>

namespace tfm {

std::string to_string(DynamicsMode mode) { return mode == DynamicsMode::Ode ? "ode" : "sde"; }

DynamicsMode parse_dynamics_mode(const std::string& name) {
  if (name == "ode") return DynamicsMode::Ode;
  if (name == "sde") return DynamicsMode::Sde;
  throw std::invalid_argument("unknown mode '" + name + "' (expected ode or sde)");
}

Index model_input_dim(const ModelConfig& cfg) {
  return 1 + cfg.dim_state + cfg.sampler.history_len * cfg.dim_state + (cfg.use_cond ? cfg.dim_cond : 0);
}

Index TfmModel::input_dim() const { return model_input_dim(config); }

TfmModel make_model(const ModelConfig& cfg, const NormStats& norm) {
  validate(cfg.sampler);
  if (cfg.dim_state < 1 || cfg.dim_cond < 0) throw std::invalid_argument("invalid model dimensions");
  if (norm.state_mean.size() != cfg.dim_state) throw std::invalid_argument("normalization does not match state dimension");

  const auto head = [&](Index out_dim, const char* name) {
    MlpConfig mc;
    mc.in_dim = model_input_dim(cfg);
    mc.out_dim = out_dim;
    mc.hidden_dim = cfg.hidden_dim;
    mc.n_hidden_layers = cfg.n_hidden_layers;
    mc.activation = cfg.activation;
    mc.seed = make_stream(cfg.seed, name)();
    return mc;
  };
  return TfmModel{cfg,
                  norm,
                  Mlp(head(cfg.dim_state, "predictor")),
                  Mlp(head(cfg.sigma_per_dim ? cfg.dim_state : 1, "sigma_head")),
                  Mlp(head(1, "time_head")),
                  false,
                  false};
}

namespace {

template <typename Row>
void fill_row(const ModelConfig& cfg, Row&& row, double t_abs, const Vector& x, const Matrix& history,
              const Vector& cond) {
  const Index d = cfg.dim_state;
  const int h = cfg.sampler.history_len;
  if (x.size() != d || history.rows() != h || (h > 0 && history.cols() != d)) {
    throw std::invalid_argument("model input shape mismatch");
  }
  row(0) = t_abs;
  row.segment(1, d) = x.transpose();
  for (int r = 0; r < h; ++r) row.segment(1 + d + r * d, d) = history.row(r);
  if (cfg.use_cond) {
    if (cond.size() != cfg.dim_cond) throw std::invalid_argument("condition vector size mismatch");
    row.segment(1 + d + h * d, cfg.dim_cond) = cond.transpose();
  }
}

}  // namespace

Matrix model_input(const TfmModel& model, double t_abs, const Vector& x, const Matrix& history, const Vector& cond) {
  Matrix in(1, model.input_dim());
  fill_row(model.config, in.row(0), t_abs, x, history, cond);
  return in;
}

Matrix build_inputs(const TfmModel& model, const std::vector<BridgeSample>& batch) {
  Matrix in(static_cast<Index>(batch.size()), model.input_dim());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    fill_row(model.config, in.row(static_cast<Index>(i)), s.t_abs, s.x_t, s.history, s.cond);
  }
  return in;
}

Matrix predicted_squared_error(const TfmModel& model, const Matrix& inputs) {
  return model.sigma_head.forward(inputs) * model.norm.error_unit;
}

Vector predicted_remaining(const TfmModel& model, const Matrix& inputs) {
  return model.time_head.forward(inputs).col(0) * model.norm.interval_unit;
}

}  // namespace tfm
