#include "pemb/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "pemb/errors.hpp"
#include "pemb/rng.hpp"

namespace pemb::nn {

namespace {

bool all_finite(const Vec& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void check_architecture(const std::vector<int>& layer_sizes) {
  if (layer_sizes.size() < 2) {
    throw ConfigError("invalid architecture: need at least input and output layers");
  }
  for (int s : layer_sizes) {
    if (s < 1) throw ConfigError("invalid architecture: non-positive layer size");
  }
}

}  // namespace

std::size_t DenseNet::parameter_count() const {
  std::size_t count = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    count += static_cast<std::size_t>(layer_sizes[l] + 1) *
             static_cast<std::size_t>(layer_sizes[l + 1]);
  }
  return count;
}

void GradientBundle::scale(double s) {
  for (auto& w : weight_grads)
    for (double& x : w) x *= s;
  for (auto& b : bias_grads)
    for (double& x : b) x *= s;
  for (double& x : input_grad) x *= s;
}

void GradientBundle::add_scaled(const GradientBundle& other, double s) {
  if (weight_grads.size() != other.weight_grads.size()) {
    throw ShapeError("gradient bundle layer count mismatch");
  }
  for (std::size_t l = 0; l < weight_grads.size(); ++l) {
    if (weight_grads[l].size() != other.weight_grads[l].size() ||
        bias_grads[l].size() != other.bias_grads[l].size()) {
      throw ShapeError("gradient bundle shape mismatch");
    }
    for (std::size_t i = 0; i < weight_grads[l].size(); ++i) {
      weight_grads[l][i] += s * other.weight_grads[l][i];
    }
    for (std::size_t i = 0; i < bias_grads[l].size(); ++i) {
      bias_grads[l][i] += s * other.bias_grads[l][i];
    }
  }
}

bool GradientBundle::finite() const {
  for (const auto& w : weight_grads)
    if (!all_finite(w)) return false;
  for (const auto& b : bias_grads)
    if (!all_finite(b)) return false;
  return all_finite(input_grad);
}

DenseNet mlp_init(const std::vector<int>& layer_sizes, std::uint64_t seed) {
  check_architecture(layer_sizes);
  DenseNet net;
  net.layer_sizes = layer_sizes;
  Rng rng(derive_seed(seed, 0x6e6e ^ 0));
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Vec w(static_cast<std::size_t>(fan_in) * fan_out);
    for (double& x : w) x = rng.uniform(-bound, bound);
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(fan_out, 0.0);
  }
  return net;
}

GradientBundle zero_gradients(const DenseNet& net) {
  GradientBundle g;
  g.weight_grads.reserve(net.num_layers());
  g.bias_grads.reserve(net.num_layers());
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    g.weight_grads.emplace_back(net.weights[l].size(), 0.0);
    g.bias_grads.emplace_back(net.biases[l].size(), 0.0);
  }
  g.input_grad.assign(net.input_dim(), 0.0);
  return g;
}

Vec mlp_forward(const DenseNet& net, const Vec& input, ForwardCache* cache) {
  if (static_cast<int>(input.size()) != net.input_dim()) {
    throw ShapeError("mlp_forward: input length does not match first layer");
  }
  if (!all_finite(input)) {
    throw NumericError("mlp_forward: non-finite input");
  }
  if (cache) {
    cache->activations.assign(1, input);
    cache->activations.reserve(net.num_layers() + 1);
  }
  Vec a = input;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const int n_in = net.layer_sizes[l];
    const int n_out = net.layer_sizes[l + 1];
    const Vec& w = net.weights[l];
    const Vec& b = net.biases[l];
    Vec z(n_out);
    for (int o = 0; o < n_out; ++o) {
      const double* row = w.data() + static_cast<std::size_t>(o) * n_in;
      double acc = b[o];
      for (int i = 0; i < n_in; ++i) acc += row[i] * a[i];
      z[o] = acc;
    }
    const bool last = (l + 1 == net.num_layers());
    const Activation act = last ? net.output_activation : net.hidden_activation;
    if (act == Activation::kTanh) {
      for (double& x : z) x = std::tanh(x);
    }
    if (cache) cache->activations.push_back(z);
    a = std::move(z);
  }
  return a;
}

void mlp_backward_accum(const DenseNet& net, const ForwardCache& cache,
                        const Vec& output_grad, double scale,
                        GradientBundle& accum, Vec* input_grad) {
  const std::size_t n_layers = net.num_layers();
  if (cache.activations.size() != n_layers + 1) {
    throw ShapeError("mlp_backward: cache does not match network depth");
  }
  if (static_cast<int>(output_grad.size()) != net.output_dim()) {
    throw ShapeError("mlp_backward: output gradient length mismatch");
  }
  if (accum.weight_grads.size() != n_layers) {
    throw ShapeError("mlp_backward: accumulator layer count mismatch");
  }
  for (std::size_t l = 0; l <= n_layers; ++l) {
    if (static_cast<int>(cache.activations[l].size()) != net.layer_sizes[l]) {
      throw ShapeError("mlp_backward: stale or mismatched cache");
    }
  }

  Vec delta = output_grad;  // output layer is linear
  for (std::size_t li = n_layers; li-- > 0;) {
    const int n_in = net.layer_sizes[li];
    const int n_out = net.layer_sizes[li + 1];
    const Vec& a_in = cache.activations[li];
    const Vec& w = net.weights[li];
    Vec& wg = accum.weight_grads[li];
    Vec& bg = accum.bias_grads[li];
    if (wg.size() != w.size() || static_cast<int>(bg.size()) != n_out) {
      throw ShapeError("mlp_backward: accumulator shape mismatch");
    }
    Vec prev(n_in, 0.0);
    for (int o = 0; o < n_out; ++o) {
      const double d = delta[o];
      const double sd = scale * d;
      double* wrow = wg.data() + static_cast<std::size_t>(o) * n_in;
      const double* row = w.data() + static_cast<std::size_t>(o) * n_in;
      for (int i = 0; i < n_in; ++i) {
        wrow[i] += sd * a_in[i];
        prev[i] += row[i] * d;
      }
      bg[o] += sd;
    }
    if (li > 0 && net.hidden_activation == Activation::kTanh) {
      // a_in is the tanh output of the previous layer
      for (int i = 0; i < n_in; ++i) prev[i] *= 1.0 - a_in[i] * a_in[i];
    }
    delta = std::move(prev);
  }
  if (input_grad) {
    input_grad->assign(delta.size(), 0.0);
    for (std::size_t i = 0; i < delta.size(); ++i) {
      (*input_grad)[i] = scale * delta[i];
    }
  }
}

GradientBundle mlp_backward(const DenseNet& net, const ForwardCache& cache,
                            const Vec& output_grad) {
  GradientBundle g = zero_gradients(net);
  mlp_backward_accum(net, cache, output_grad, 1.0, g, &g.input_grad);
  return g;
}

AdamState adam_init(const DenseNet& net, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    s.m_weights.emplace_back(net.weights[l].size(), 0.0);
    s.v_weights.emplace_back(net.weights[l].size(), 0.0);
    s.m_biases.emplace_back(net.biases[l].size(), 0.0);
    s.v_biases.emplace_back(net.biases[l].size(), 0.0);
  }
  return s;
}

namespace {

void adam_update_array(Vec& param, const Vec& grad, Vec& m, Vec& v,
                       const AdamState& s, double bc1, double bc2) {
  if (param.size() != grad.size() || param.size() != m.size()) {
    throw ShapeError("adam_step: shape mismatch");
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    param[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
  }
}

}  // namespace

void adam_step(DenseNet& net, const GradientBundle& grads, AdamState& state) {
  if (grads.weight_grads.size() != net.num_layers() ||
      state.m_weights.size() != net.num_layers()) {
    throw ShapeError("adam_step: layer count mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    adam_update_array(net.weights[l], grads.weight_grads[l], state.m_weights[l],
                      state.v_weights[l], state, bc1, bc2);
    adam_update_array(net.biases[l], grads.bias_grads[l], state.m_biases[l],
                      state.v_biases[l], state, bc1, bc2);
  }
}

Vec softmax(const Vec& logits) {
  if (logits.empty()) throw ShapeError("softmax: empty logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vec p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

std::pair<double, Vec> categorical_log_prob(const Vec& logits, int action) {
  if (action < 0 || action >= static_cast<int>(logits.size())) {
    throw ShapeError("categorical_log_prob: action index out of range");
  }
  if (!all_finite(logits)) {
    throw NumericError("categorical_log_prob: non-finite logits");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double x : logits) sum += std::exp(x - mx);
  const double log_z = mx + std::log(sum);
  const double log_prob = logits[action] - log_z;
  Vec grad(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    grad[i] = -std::exp(logits[i] - log_z);
  }
  grad[action] += 1.0;
  return {log_prob, grad};
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "model format is little-endian; byte-swapped platforms unsupported");

constexpr char kMagic[4] = {'P', 'E', 'M', 'B'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw IoError("model file truncated");
  return value;
}

}  // namespace

void save_net(const DenseNet& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open model file for writing: " + path.string());
  out.write(kMagic, 4);
  write_pod(out, kFormatVersion);
  write_pod(out, static_cast<std::uint8_t>(net.hidden_activation));
  write_pod(out, static_cast<std::uint8_t>(net.output_activation));
  write_pod(out, static_cast<std::uint16_t>(0));
  write_pod(out, static_cast<std::uint32_t>(net.layer_sizes.size()));
  for (int s : net.layer_sizes) write_pod(out, static_cast<std::uint32_t>(s));
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    out.write(reinterpret_cast<const char*>(net.weights[l].data()),
              static_cast<std::streamsize>(net.weights[l].size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(net.biases[l].data()),
              static_cast<std::streamsize>(net.biases[l].size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing model file: " + path.string());
}

DenseNet load_net(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("not a model file: " + path.string());
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kFormatVersion) {
    throw IoError("unsupported model format version");
  }
  DenseNet net;
  net.hidden_activation = static_cast<Activation>(read_pod<std::uint8_t>(in));
  net.output_activation = static_cast<Activation>(read_pod<std::uint8_t>(in));
  read_pod<std::uint16_t>(in);  // reserved
  const auto n_sizes = read_pod<std::uint32_t>(in);
  if (n_sizes < 2 || n_sizes > 64) throw IoError("corrupt model header");
  net.layer_sizes.resize(n_sizes);
  for (auto& s : net.layer_sizes) s = static_cast<int>(read_pod<std::uint32_t>(in));
  for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
    const std::size_t n_w = static_cast<std::size_t>(net.layer_sizes[l]) *
                            static_cast<std::size_t>(net.layer_sizes[l + 1]);
    Vec w(n_w), b(net.layer_sizes[l + 1]);
    in.read(reinterpret_cast<char*>(w.data()),
            static_cast<std::streamsize>(n_w * sizeof(double)));
    in.read(reinterpret_cast<char*>(b.data()),
            static_cast<std::streamsize>(b.size() * sizeof(double)));
    if (!in) throw IoError("model file truncated");
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  return net;
}

}  // namespace pemb::nn
