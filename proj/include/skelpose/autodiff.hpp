#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

// Reverse-mode automatic differentiation over dense f64 tensors of rank <= 4.
//
// A Tensor is a shared handle to a graph node. Ops record their parents and a
// backward closure; Tensor::backward() on a scalar walks the graph in reverse
// topological order and accumulates into every node that requires a gradient.
// Every op checks its forward result for NaN/Inf and throws NonFiniteError.
namespace skelpose {

using Shape = std::vector<int>;

size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  // Leaf that accumulates a gradient.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int dim(int i) const { return shape()[i]; }
  size_t size() const;
  bool requires_grad() const;

  std::span<const double> data() const;
  // Mutable access for optimizers and finite-difference probes; does not
  // invalidate graphs already built on top of this tensor.
  std::span<double> mutable_data();
  // Empty until a backward pass reached this tensor.
  std::span<const double> grad() const;
  double item() const;

  // Seeds d(self)/d(self) = 1; self must hold one element.
  void backward() const;
  void zero_grad();

  // Detached copy of the values (no graph, no gradient).
  Tensor detach() const;

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op(Shape, std::vector<double>, std::vector<Tensor>, const char*,
                        std::function<void(detail::Node&)>);
  friend detail::Node& node_of(const Tensor&);
};

// ---- ops ----

// x (N, C, H, W), w (OC, C, K, K), b (OC) or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
// x (N, C, H, W), w (C, OC, K, K); output side (H - 1)·stride − 2·pad + K + output_padding.
Tensor transposed_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad,
                         int output_padding = 0);
// Element-wise sum of equal shapes (the pixel-wise summation of skip connections).
Tensor residual_add(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// x (N, in), w (out, in), b (out) or undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor max_pool(const Tensor& x, int kernel, int stride);
Tensor upsample_nearest(const Tensor& x, int factor);
Tensor concat_channels(const Tensor& a, const Tensor& b);
// (N, ...) -> (N, rest).
Tensor flatten(const Tensor& x);
Tensor scale(const Tensor& x, double factor);

// Mean over elements of the stabilised binary cross entropy of sigmoid(logits).
Tensor sigmoid_cross_entropy(const Tensor& logits, const Tensor& targets);
// (1 / 2N) Σ ‖pred − target‖² with N = pred.dim(0).
Tensor euclidean_loss(const Tensor& pred, const Tensor& target);

// ---- initialisation ----

// Uniform(−a, a), a = sqrt(6 / (fan_in + fan_out)).
std::vector<double> glorot_uniform(size_t count, int fan_in, int fan_out, std::mt19937_64& rng);
// FCN-style bilinear upsampling kernel for a (C_in, C_out, K, K) transposed
// conv: input channel i feeds output channel i mod C_out.
std::vector<double> bilinear_kernel(int in_channels, int out_channels, int kernel);

// ---- parameters, optimizer, checkpoints ----

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

class ParameterSet {
 public:
  Tensor& add(std::string name, Shape shape, std::vector<double> values);
  std::vector<NamedParameter>& entries() { return params_; }
  const std::vector<NamedParameter>& entries() const { return params_; }
  const Tensor& at(const std::string& name) const;
  size_t count() const;
  void zero_grad();

 private:
  std::vector<NamedParameter> params_;
};

struct SgdState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0002;
  std::vector<std::vector<double>> velocity;
};

// v ← momentum·v − lr·(g + weight_decay·w); w ← w + v.
void sgd_update(SgdState& state, size_t slot, std::span<double> weights,
                std::span<const double> grads);
// Applies sgd_update to every parameter using its accumulated gradient.
void sgd_step(SgdState& state, ParameterSet& params);

// Manifest JSON at `manifest_path`, f64 LE blob next to it (".bin"). `extra`
// is stored verbatim under "meta".
void save_checkpoint(const std::filesystem::path& manifest_path, const ParameterSet& params,
                     std::uint64_t seed, int iterations, const nlohmann::json& extra = {});

struct CheckpointInfo {
  std::uint64_t seed = 0;
  int iterations = 0;
  nlohmann::json meta;
};

// Loads values into an already-built ParameterSet with matching names/shapes.
CheckpointInfo load_checkpoint(const std::filesystem::path& manifest_path, ParameterSet& params);
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& manifest_path);

}  // namespace skelpose
