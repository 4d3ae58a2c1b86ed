#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include "roar/tensor.hpp"

namespace roar {

class Rng;

/// y = W x + b with W of shape (out, in) and b of shape (out).
struct Affine {
  Tensor weight;
  Tensor bias;

  std::size_t in_dim() const { return weight.dim(1); }
  std::size_t out_dim() const { return weight.dim(0); }
};

/// Elementwise max(0, x).
struct Rectifier {};

using Layer = std::variant<Affine, Rectifier>;

/// How rectifiers route gradients on the backward pass.
///
/// Standard masks by the forward activation only. Guided additionally zeroes
/// negative incoming gradients at every rectifier. Forward outputs never
/// depend on the mode.
enum class GradientMode { Standard, Guided };

struct OutputTarget {
  std::size_t unit_index = 0;
};

/// A feed-forward stack of affine and rectifier layers.
class Model {
 public:
  Model() = default;
  /// Validates that adjacent affine layers agree on dimensions.
  explicit Model(std::vector<Layer> layers, GradientMode mode = GradientMode::Standard);

  /// Affine/Rectifier stack with the given hidden widths. Weights and biases
  /// are drawn uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static Model mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                   std::size_t output_dim, Rng& rng);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return output_dim_; }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  GradientMode gradient_mode() const { return mode_; }
  void set_gradient_mode(GradientMode mode) { mode_ = mode; }

  friend bool operator==(const Model& a, const Model& b);

 private:
  std::vector<Layer> layers_;
  GradientMode mode_ = GradientMode::Standard;
  std::size_t input_dim_ = 0;
  std::size_t output_dim_ = 0;
};

/// Per-layer inputs recorded during a batched forward pass.
/// `inputs[l]` is the (n, width) matrix fed to layer l.
struct ForwardTrace {
  std::vector<Tensor> inputs;
  Tensor output;
};

/// Parameter gradients, one slot per layer; rectifier slots stay empty.
struct ParameterGradients {
  std::vector<Tensor> weight;
  std::vector<Tensor> bias;
};

/// Batched forward pass over an (n, input_dim) matrix, keeping the trace.
ForwardTrace forward_trace(const Model& model, const Tensor& batch);

/// Backpropagates `output_grad` (n, output_dim) through a recorded trace and
/// returns the (n, input_dim) input gradient. Parameter gradients summed
/// over the batch are written to `params` when it is non-null.
Tensor backward(const Model& model, const ForwardTrace& trace, const Tensor& output_grad,
                GradientMode mode, ParameterGradients* params = nullptr);

/// Evaluates the model. `x` is either one sample (any shape whose size is
/// the input dimension, rank != 2) giving a rank-1 output, or a batch whose
/// leading axis indexes samples, giving an (n, output_dim) output.
Tensor forward(const Model& model, const Tensor& x);

/// d output[target] / d x for a single sample, in the model's gradient mode.
/// The result has the shape of `x`.
Tensor input_gradient(const Model& model, const Tensor& x, OutputTarget target);
Tensor input_gradient(const Model& model, const Tensor& x, OutputTarget target,
                      GradientMode mode);

}  // namespace roar
