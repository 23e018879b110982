#ifndef PEMB_NN_HPP_
#define PEMB_NN_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace pemb::nn {

using Vec = std::vector<double>;

enum class Activation : std::uint8_t { kTanh = 0, kIdentity = 1 };

// Dense feedforward network. weights[l] is the (out x in) matrix of layer l
// stored row-major; biases[l] has length out. Hidden layers apply tanh, the
// output layer is linear; downstream code applies softmax where needed.
struct DenseNet {
  std::vector<int> layer_sizes;
  std::vector<Vec> weights;
  std::vector<Vec> biases;
  Activation hidden_activation = Activation::kTanh;
  Activation output_activation = Activation::kIdentity;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return weights.size(); }
  std::size_t parameter_count() const;
};

// Activations recorded by a forward pass; activations[0] is the input and
// activations[L] the output. Sufficient for an exact backward pass.
struct ForwardCache {
  std::vector<Vec> activations;
};

// Per-parameter gradients mirroring a DenseNet's shapes, plus the gradient
// with respect to the network input (needed to chain encoder and decoder).
struct GradientBundle {
  std::vector<Vec> weight_grads;
  std::vector<Vec> bias_grads;
  Vec input_grad;

  void scale(double s);
  void add_scaled(const GradientBundle& other, double s);
  bool finite() const;
};

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<Vec> m_weights, v_weights;
  std::vector<Vec> m_biases, v_biases;
};

// Fan-in-scaled uniform initialization, deterministic in the seed.
// Throws ConfigError on architectures with fewer than two layers or
// non-positive sizes.
DenseNet mlp_init(const std::vector<int>& layer_sizes, std::uint64_t seed);

// Zero-filled gradient shapes for accumulation loops.
GradientBundle zero_gradients(const DenseNet& net);

Vec mlp_forward(const DenseNet& net, const Vec& input, ForwardCache* cache);

inline Vec mlp_forward(const DenseNet& net, const Vec& input) {
  return mlp_forward(net, input, nullptr);
}

// Backward pass for a scalar loss L with output_grad = dL/d(output).
// Accumulates scale * gradients into accum; when input_grad is non-null the
// (scaled) gradient with respect to the input is written there.
void mlp_backward_accum(const DenseNet& net, const ForwardCache& cache,
                        const Vec& output_grad, double scale,
                        GradientBundle& accum, Vec* input_grad);

GradientBundle mlp_backward(const DenseNet& net, const ForwardCache& cache,
                            const Vec& output_grad);

AdamState adam_init(const DenseNet& net, double learning_rate);

// Standard bias-corrected adaptive-moment update; increments state.step.
void adam_step(DenseNet& net, const GradientBundle& grads, AdamState& state);

// Numerically stabilized softmax; strictly positive, sums to 1.
Vec softmax(const Vec& logits);

// log softmax(logits)[action] plus its gradient with respect to the logits
// (onehot(action) - softmax(logits), the maximization direction).
std::pair<double, Vec> categorical_log_prob(const Vec& logits, int action);

// Binary model format: header (magic, version, activation tags, layer sizes)
// followed by all parameters as a flat little-endian float64 array,
// layer-major, weights then bias per layer. Round-trips bit-exactly.
void save_net(const DenseNet& net, const std::filesystem::path& path);
DenseNet load_net(const std::filesystem::path& path);

}  // namespace pemb::nn

#endif  // PEMB_NN_HPP_
