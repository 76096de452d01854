#include "tfm/mlp.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "tfm/rng.hpp"

namespace tfm {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

constexpr char kMagic[8] = {'T', 'F', 'M', 'M', 'L', 'P', '0', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

constexpr double kSeluLambda = 1.0507009873554804934193349852946;
constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

Matrix activate(const Matrix& z, Activation act) {
  switch (act) {
    case Activation::Tanh:
      return z.array().tanh().matrix();
    case Activation::Relu:
      return z.array().max(0.0).matrix();
    case Activation::Selu:
      return z.unaryExpr([](double v) { return v > 0.0 ? kSeluLambda * v : kSeluLambda * kSeluAlpha * std::expm1(v); });
  }
  throw std::logic_error("unknown activation");
}

// Derivative evaluated from the pre-activation.
Matrix activation_slope(const Matrix& z, Activation act) {
  switch (act) {
    case Activation::Tanh:
      return (1.0 - z.array().tanh().square()).matrix();
    case Activation::Relu:
      return (z.array() > 0.0).cast<double>().matrix();
    case Activation::Selu:
      return z.unaryExpr([](double v) { return v > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(v); });
  }
  throw std::logic_error("unknown activation");
}

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return value;
}

}  // namespace

std::string to_string(Activation act) {
  switch (act) {
    case Activation::Tanh:
      return "tanh";
    case Activation::Relu:
      return "relu";
    case Activation::Selu:
      return "selu";
  }
  return "unknown";
}

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "selu") return Activation::Selu;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

Mlp::Mlp(const MlpConfig& config) : config_(config) {
  if (config.in_dim < 1 || config.out_dim < 1 || config.hidden_dim < 1 || config.n_hidden_layers < 1) {
    throw std::invalid_argument("MlpConfig dimensions must be >= 1");
  }
  auto rng = make_stream(config.seed, "mlp_init");
  std::vector<Index> widths{config.in_dim};
  for (int i = 0; i < config.n_hidden_layers; ++i) widths.push_back(config.hidden_dim);
  widths.push_back(config.out_dim);

  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const Index fan_in = widths[l];
    const Index fan_out = widths[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Layer layer;
    layer.weight.resize(fan_out, fan_in);
    // Fill row-major so the draw order matches the flat parameter layout.
    for (Index r = 0; r < fan_out; ++r) {
      for (Index c = 0; c < fan_in; ++c) layer.weight(r, c) = dist(rng);
    }
    layer.bias = Vector::Zero(fan_out);
    layer.grad_weight = Matrix::Zero(fan_out, fan_in);
    layer.grad_bias = Vector::Zero(fan_out);
    layers_.push_back(std::move(layer));
  }
}

Index Mlp::parameter_count() const {
  Index n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

Vector Mlp::flat_parameters() const {
  Vector flat(parameter_count());
  Index pos = 0;
  for (const auto& layer : layers_) {
    for (Index r = 0; r < layer.weight.rows(); ++r) {
      for (Index c = 0; c < layer.weight.cols(); ++c) flat[pos++] = layer.weight(r, c);
    }
    for (Index i = 0; i < layer.bias.size(); ++i) flat[pos++] = layer.bias[i];
  }
  return flat;
}

void Mlp::set_flat_parameters(const Vector& flat) {
  if (flat.size() != parameter_count()) throw std::invalid_argument("parameter vector size mismatch");
  Index pos = 0;
  for (auto& layer : layers_) {
    for (Index r = 0; r < layer.weight.rows(); ++r) {
      for (Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = flat[pos++];
    }
    for (Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = flat[pos++];
  }
}

Vector Mlp::flat_gradients() const {
  Vector flat(parameter_count());
  Index pos = 0;
  for (const auto& layer : layers_) {
    for (Index r = 0; r < layer.grad_weight.rows(); ++r) {
      for (Index c = 0; c < layer.grad_weight.cols(); ++c) flat[pos++] = layer.grad_weight(r, c);
    }
    for (Index i = 0; i < layer.grad_bias.size(); ++i) flat[pos++] = layer.grad_bias[i];
  }
  return flat;
}

void Mlp::zero_grad() {
  for (auto& layer : layers_) {
    layer.grad_weight.setZero();
    layer.grad_bias.setZero();
  }
}

Matrix Mlp::forward(const Matrix& x, ForwardCache* cache) const {
  if (x.cols() != config_.in_dim) {
    throw std::invalid_argument("mlp input width " + std::to_string(x.cols()) + ", expected " +
                                std::to_string(config_.in_dim));
  }
  if (!x.allFinite()) throw std::invalid_argument("mlp input contains non-finite values");
  if (cache) {
    cache->layer_inputs.clear();
    cache->pre_activations.clear();
  }
  Matrix a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    Matrix z = a * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (cache) cache->layer_inputs.push_back(a);
    if (l + 1 == layers_.size()) return z;
    if (cache) cache->pre_activations.push_back(z);
    a = activate(z, config_.activation);
  }
  return a;
}

Matrix Mlp::backward(const ForwardCache& cache, const Matrix& grad_out) {
  if (cache.layer_inputs.size() != layers_.size() || cache.pre_activations.size() + 1 != layers_.size()) {
    throw std::invalid_argument("forward cache does not match this network");
  }
  const Index batch = cache.layer_inputs.front().rows();
  if (grad_out.rows() != batch || grad_out.cols() != config_.out_dim) {
    throw std::invalid_argument("output gradient shape mismatch");
  }
  Matrix g = grad_out;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    auto& layer = layers_[l];
    layer.grad_weight.noalias() += g.transpose() * cache.layer_inputs[l];
    layer.grad_bias += g.colwise().sum().transpose();
    Matrix g_in = g * layer.weight;
    if (l > 0) {
      g = g_in.cwiseProduct(activation_slope(cache.pre_activations[l - 1], config_.activation));
    } else {
      return g_in;
    }
  }
  return g;
}

bool bitwise_equal(const Mlp& a, const Mlp& b) {
  if (!(a.config() == b.config())) return false;
  const Vector pa = a.flat_parameters();
  const Vector pb = b.flat_parameters();
  return pa.size() == pb.size() &&
         std::memcmp(pa.data(), pb.data(), static_cast<std::size_t>(pa.size()) * sizeof(double)) == 0;
}

AdamState AdamState::for_model(const Mlp& model, double lr) {
  AdamState st;
  st.lr = lr;
  for (const auto& layer : model.layers()) {
    st.m_weight.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
    st.v_weight.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
    st.m_bias.push_back(Vector::Zero(layer.bias.size()));
    st.v_bias.push_back(Vector::Zero(layer.bias.size()));
  }
  return st;
}

void adam_step(Mlp& model, AdamState& st) {
  auto& layers = model.layers();
  if (st.m_weight.size() != layers.size()) throw std::invalid_argument("optimizer state does not match model");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (!layers[l].grad_weight.allFinite() || !layers[l].grad_bias.allFinite()) {
      throw std::runtime_error("non-finite gradient in layer " + std::to_string(l));
    }
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  const auto update = [&](auto& param, auto& grad, auto& m, auto& v) {
    m = st.beta1 * m + (1.0 - st.beta1) * grad;
    v = st.beta2 * v + (1.0 - st.beta2) * grad.cwiseProduct(grad);
    param.array() -= st.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + st.eps);
    grad.setZero();
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, layers[l].grad_weight, st.m_weight[l], st.v_weight[l]);
    update(layers[l].bias, layers[l].grad_bias, st.m_bias[l], st.v_bias[l]);
  }
}

double gradcheck(Mlp& model, const LossFn& loss, const Matrix& x, const GradientFn& analytic, double step) {
  model.zero_grad();
  ForwardCache cache;
  const Matrix out = model.forward(x, &cache);
  Matrix grad_out = Matrix::Zero(out.rows(), out.cols());
  loss(out, &grad_out);
  if (analytic) {
    analytic(model, cache, grad_out);
  } else {
    model.backward(cache, grad_out);
  }
  const Vector grads = model.flat_gradients();
  model.zero_grad();

  const Vector params = model.flat_parameters();
  Vector probe = params;
  double worst = 0.0;
  for (Index i = 0; i < params.size(); ++i) {
    probe[i] = params[i] + step;
    model.set_flat_parameters(probe);
    const double up = loss(model.forward(x), nullptr);
    probe[i] = params[i] - step;
    model.set_flat_parameters(probe);
    const double down = loss(model.forward(x), nullptr);
    probe[i] = params[i];
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(grads[i]), std::abs(numeric), kGradcheckFloor});
    worst = std::max(worst, std::abs(grads[i] - numeric) / denom);
  }
  model.set_flat_parameters(params);
  return worst;
}

void save_checkpoint(const Mlp& model, std::ostream& out) {
  const auto& cfg = model.config();
  out.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(out, kCheckpointVersion);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.activation));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(cfg.in_dim));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(cfg.out_dim));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(cfg.hidden_dim));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(cfg.n_hidden_layers));
  write_pod<std::uint64_t>(out, cfg.seed);
  const Vector params = model.flat_parameters();
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(params.size()));
  out.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(params.size() * static_cast<Index>(sizeof(double))));
  if (!out) throw std::runtime_error("checkpoint write failed");
}

void save_checkpoint(const Mlp& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  save_checkpoint(model, out);
}

Mlp load_checkpoint(std::istream& in) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw std::runtime_error("not a TFM checkpoint");
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const auto act = read_pod<std::uint32_t>(in);
  if (act > static_cast<std::uint32_t>(Activation::Selu)) throw std::runtime_error("checkpoint has unknown activation");
  MlpConfig cfg;
  cfg.activation = static_cast<Activation>(act);
  cfg.in_dim = static_cast<Index>(read_pod<std::uint64_t>(in));
  cfg.out_dim = static_cast<Index>(read_pod<std::uint64_t>(in));
  cfg.hidden_dim = static_cast<Index>(read_pod<std::uint64_t>(in));
  cfg.n_hidden_layers = static_cast<int>(read_pod<std::uint64_t>(in));
  cfg.seed = read_pod<std::uint64_t>(in);
  Mlp model(cfg);
  const auto count = static_cast<Index>(read_pod<std::uint64_t>(in));
  if (count != model.parameter_count()) throw std::runtime_error("checkpoint parameter count mismatch");
  Vector params(count);
  in.read(reinterpret_cast<char*>(params.data()), static_cast<std::streamsize>(count * static_cast<Index>(sizeof(double))));
  if (!in) throw std::runtime_error("checkpoint truncated");
  model.set_flat_parameters(params);
  return model;
}

Mlp load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

}  // namespace tfm
