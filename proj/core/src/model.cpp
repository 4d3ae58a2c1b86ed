#include "roar/model.hpp"

#include <cmath>

#include <fmt/format.h>

#include "roar/errors.hpp"
#include "roar/rng.hpp"

namespace roar {
namespace {

// out(n, o) = b(o) + sum_i in(n, i) * W(o, i)
Tensor affine_forward(const Affine& layer, const Tensor& in) {
  const std::size_t n = in.dim(0);
  const std::size_t in_dim = layer.in_dim();
  const std::size_t out_dim = layer.out_dim();
  Tensor out({n, out_dim});
  const double* w = layer.weight.data().data();
  const double* b = layer.bias.data().data();
  for (std::size_t s = 0; s < n; ++s) {
    const double* x = in.data().data() + s * in_dim;
    double* y = out.data().data() + s * out_dim;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* wr = w + o * in_dim;
      double acc = b[o];
      for (std::size_t i = 0; i < in_dim; ++i) acc += wr[i] * x[i];
      y[o] = acc;
    }
  }
  return out;
}

Tensor rectifier_forward(const Tensor& in) {
  Tensor out = in;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

bool is_batch_of(const Tensor& x, std::size_t input_dim) {
  return x.rank() >= 2 && x.dim(0) > 0 && x.row_size() == input_dim &&
         !(x.rank() != 2 && x.size() == input_dim);
}

}  // namespace

Model::Model(std::vector<Layer> layers, GradientMode mode)
    : layers_(std::move(layers)), mode_(mode) {
  std::size_t width = 0;
  bool have_width = false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto* affine = std::get_if<Affine>(&layers_[l]);
    if (!affine) continue;
    if (affine->weight.rank() != 2 || affine->bias.rank() != 1 ||
        affine->bias.dim(0) != affine->weight.dim(0)) {
      throw DimensionError(fmt::format("layer {}: weight {} and bias {} are inconsistent", l,
                                       shape_string(affine->weight.shape()),
                                       shape_string(affine->bias.shape())),
                           l);
    }
    if (!have_width) {
      input_dim_ = affine->in_dim();
    } else if (affine->in_dim() != width) {
      throw DimensionError(
          fmt::format("layer {}: expects {} inputs but previous layer produces {}", l,
                      affine->in_dim(), width),
          l);
    }
    width = affine->out_dim();
    have_width = true;
  }
  if (!have_width) throw DimensionError("model needs at least one affine layer");
  output_dim_ = width;
}

Model Model::mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                 std::size_t output_dim, Rng& rng) {
  std::vector<Layer> layers;
  std::size_t fan_in = input_dim;
  auto make_affine = [&](std::size_t out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Affine a{Tensor({out, fan_in}), Tensor({out})};
    for (double& w : a.weight.data()) w = bound * (2.0 * rng.uniform() - 1.0);
    for (double& b : a.bias.data()) b = bound * (2.0 * rng.uniform() - 1.0);
    fan_in = out;
    return a;
  };
  for (std::size_t width : hidden) {
    layers.emplace_back(make_affine(width));
    layers.emplace_back(Rectifier{});
  }
  layers.emplace_back(make_affine(output_dim));
  return Model(std::move(layers));
}

bool operator==(const Model& a, const Model& b) {
  if (a.mode_ != b.mode_ || a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    if (a.layers_[l].index() != b.layers_[l].index()) return false;
    const auto* x = std::get_if<Affine>(&a.layers_[l]);
    const auto* y = std::get_if<Affine>(&b.layers_[l]);
    if (x && (x->weight != y->weight || x->bias != y->bias)) return false;
  }
  return true;
}

ForwardTrace forward_trace(const Model& model, const Tensor& batch) {
  if (batch.rank() != 2 || batch.dim(1) != model.input_dim()) {
    throw DimensionError(fmt::format("layer 0: expected (n, {}) input, got {}",
                                     model.input_dim(), shape_string(batch.shape())),
                         0);
  }
  ForwardTrace trace;
  trace.inputs.reserve(model.layers().size());
  Tensor current = batch;
  for (const Layer& layer : model.layers()) {
    Tensor next = std::holds_alternative<Affine>(layer)
                      ? affine_forward(std::get<Affine>(layer), current)
                      : rectifier_forward(current);
    trace.inputs.push_back(std::move(current));
    current = std::move(next);
  }
  trace.output = std::move(current);
  return trace;
}

Tensor backward(const Model& model, const ForwardTrace& trace, const Tensor& output_grad,
                GradientMode mode, ParameterGradients* params) {
  const auto& layers = model.layers();
  if (trace.inputs.size() != layers.size() || output_grad.shape() != trace.output.shape()) {
    throw DimensionError("backward: trace does not match model");
  }
  if (params) {
    params->weight.assign(layers.size(), Tensor());
    params->bias.assign(layers.size(), Tensor());
  }
  Tensor grad = output_grad;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Tensor& in = trace.inputs[l];
    const std::size_t n = in.dim(0);
    if (const auto* affine = std::get_if<Affine>(&layers[l])) {
      const std::size_t in_dim = affine->in_dim();
      const std::size_t out_dim = affine->out_dim();
      const double* w = affine->weight.data().data();
      if (params) {
        Tensor gw({out_dim, in_dim});
        Tensor gb({out_dim});
        for (std::size_t s = 0; s < n; ++s) {
          const double* x = in.data().data() + s * in_dim;
          const double* g = grad.data().data() + s * out_dim;
          for (std::size_t o = 0; o < out_dim; ++o) {
            gb[o] += g[o];
            double* row = gw.data().data() + o * in_dim;
            for (std::size_t i = 0; i < in_dim; ++i) row[i] += g[o] * x[i];
          }
        }
        params->weight[l] = std::move(gw);
        params->bias[l] = std::move(gb);
      }
      Tensor gin({n, in_dim});
      for (std::size_t s = 0; s < n; ++s) {
        const double* g = grad.data().data() + s * out_dim;
        double* dst = gin.data().data() + s * in_dim;
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double* wr = w + o * in_dim;
          for (std::size_t i = 0; i < in_dim; ++i) dst[i] += g[o] * wr[i];
        }
      }
      grad = std::move(gin);
    } else {
      auto g = grad.data();
      auto x = in.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const bool open = x[i] > 0.0 && (mode == GradientMode::Standard || g[i] > 0.0);
        if (!open) g[i] = 0.0;
      }
    }
  }
  return grad;
}

Tensor forward(const Model& model, const Tensor& x) {
  const std::size_t d = model.input_dim();
  if (is_batch_of(x, d)) {
    Tensor batch = x.reshaped({x.dim(0), d});
    Tensor out = forward_trace(model, batch).output;
    out.require_finite("forward");
    return out;
  }
  if (x.size() != d) {
    throw DimensionError(fmt::format("layer 0: expected {} input features, got shape {}", d,
                                     shape_string(x.shape())),
                         0);
  }
  Tensor out = forward_trace(model, x.reshaped({1, d})).output;
  out.require_finite("forward");
  return out.reshaped({model.output_dim()});
}

Tensor input_gradient(const Model& model, const Tensor& x, OutputTarget target) {
  return input_gradient(model, x, target, model.gradient_mode());
}

Tensor input_gradient(const Model& model, const Tensor& x, OutputTarget target,
                      GradientMode mode) {
  const std::size_t d = model.input_dim();
  if (x.size() != d) {
    throw DimensionError(fmt::format("layer 0: input_gradient expects a single sample of {} "
                                     "features, got shape {}",
                                     d, shape_string(x.shape())),
                         0);
  }
  if (target.unit_index >= model.output_dim()) {
    throw TargetError(fmt::format("output unit {} out of range for {} outputs",
                                  target.unit_index, model.output_dim()));
  }
  ForwardTrace trace = forward_trace(model, x.reshaped({1, d}));
  Tensor seed({1, model.output_dim()});
  seed[target.unit_index] = 1.0;
  Tensor grad = backward(model, trace, seed, mode);
  grad.require_finite("input_gradient");
  return grad.reshaped(x.shape());
}

}  // namespace roar
