#include "roar/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "roar/errors.hpp"
#include "roar/rng.hpp"

namespace roar {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Loss and d loss / d logits for a batch, averaged over samples.
double loss_and_grad(LossKind kind, const Tensor& logits, std::span<const std::uint32_t> labels,
                     Tensor& grad) {
  const std::size_t n = logits.dim(0);
  const std::size_t k = logits.dim(1);
  const double inv_n = 1.0 / static_cast<double>(n);
  grad = Tensor({n, k});
  double loss = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    auto z = logits.row(s);
    auto g = grad.row(s);
    if (kind == LossKind::SoftmaxCrossEntropy) {
      const double peak = *std::max_element(z.begin(), z.end());
      double total = 0.0;
      for (std::size_t c = 0; c < k; ++c) total += std::exp(z[c] - peak);
      const double log_total = std::log(total) + peak;
      loss += log_total - z[labels[s]];
      for (std::size_t c = 0; c < k; ++c) {
        const double p = std::exp(z[c] - log_total);
        g[c] = (p - (c == labels[s] ? 1.0 : 0.0)) * inv_n;
      }
    } else {
      for (std::size_t c = 0; c < k; ++c) {
        const double diff = z[c] - (c == labels[s] ? 1.0 : 0.0);
        loss += 0.5 * diff * diff;
        g[c] = diff * inv_n;
      }
    }
  }
  return loss * inv_n;
}

void check_trainable(const SplitDataset& data) {
  if (data.train.size() == 0) throw Error("train: training split is empty");
  if (data.test.size() == 0) throw Error("train: test split is empty");
  data.validate();
}

}  // namespace

TrainResult train(const MlpSpec& spec, const SplitDataset& data, const TrainConfig& config) {
  check_trainable(data);
  if (!(config.learning_rate > 0.0)) throw Error("train: learning_rate must be positive");
  if (config.steps == 0) throw Error("train: steps must be positive");
  if (config.batch_size == 0 || config.batch_size > data.train.size()) {
    throw Error(fmt::format("train: batch_size {} must be in [1, {}]", config.batch_size,
                            data.train.size()));
  }
  if (data.num_classes < 2) throw Error("train: need at least two classes");

  const std::size_t n = data.train.size();
  const std::size_t d = data.feature_dim();
  const std::size_t batch = config.batch_size;

  Rng rng(config.seed);
  Model model = Model::mlp(d, spec.hidden, data.num_classes, rng);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::size_t cursor = 0;

  Tensor inputs({batch, d});
  std::vector<std::uint32_t> labels(batch);
  Tensor output_grad;
  ParameterGradients grads;

  for (std::size_t step = 0; step < config.steps; ++step) {
    if (cursor + batch > n) {
      rng.shuffle(order);
      cursor = 0;
    }
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t idx = order[cursor + b];
      auto src = data.train.features.row(idx);
      std::copy(src.begin(), src.end(), inputs.row(b).begin());
      labels[b] = data.train.labels[idx];
    }
    cursor += batch;

    ForwardTrace trace = forward_trace(model, inputs);
    const double loss = loss_and_grad(config.loss, trace.output, labels, output_grad);
    if (!std::isfinite(loss)) {
      throw TrainingError(fmt::format("train: loss became non-finite at step {}", step), step);
    }
    backward(model, trace, output_grad, GradientMode::Standard, &grads);
    for (std::size_t l = 0; l < model.layers().size(); ++l) {
      auto* affine = std::get_if<Affine>(&model.layers()[l]);
      if (!affine) continue;
      auto w = affine->weight.data();
      auto gw = grads.weight[l].data();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= config.learning_rate * gw[i];
      auto bias = affine->bias.data();
      auto gb = grads.bias[l].data();
      for (std::size_t i = 0; i < bias.size(); ++i) bias[i] -= config.learning_rate * gb[i];
    }
  }
  for (const Layer& layer : model.layers()) {
    if (const auto* affine = std::get_if<Affine>(&layer)) {
      if (!affine->weight.all_finite() || !affine->bias.all_finite()) {
        throw TrainingError("train: parameters became non-finite", config.steps);
      }
    }
  }
  const double acc = accuracy(model, data.test);
  return {std::move(model), acc};
}

TrainResult train(const ModelSpec& spec, const SplitDataset& data, const TrainConfig& config) {
  if (const auto* mlp = std::get_if<MlpSpec>(&spec)) return train(*mlp, data, config);
  check_trainable(data);
  Model model = fit_least_squares(data.train, data.num_classes, std::get<LeastSquaresSpec>(spec).ridge);
  const double acc = accuracy(model, data.test);
  return {std::move(model), acc};
}

Model fit_least_squares(const Tensor& features, const Tensor& targets, double ridge,
                        bool fit_bias) {
  if (features.rank() != 2 || features.dim(0) == 0) {
    throw DimensionError("fit_least_squares: features must be a non-empty (n, d) matrix");
  }
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) {
    throw Error("fit_least_squares: ridge must be a finite non-negative number");
  }
  const std::size_t n = features.dim(0);
  const std::size_t d = features.dim(1);
  const std::size_t k = targets.rank() == 1 ? 1 : targets.dim(1);
  if (targets.dim(0) != n || targets.rank() > 2) {
    throw DimensionError(fmt::format("fit_least_squares: targets {} do not match {} samples",
                                     shape_string(targets.shape()), n));
  }
  const std::size_t p = d + (fit_bias ? 1 : 0);

  RowMatrix x(n, p);
  x.leftCols(d) = Eigen::Map<const RowMatrix>(features.data().data(), n, d);
  if (fit_bias) x.col(d).setOnes();
  Eigen::Map<const RowMatrix> y(targets.data().data(), n, k);

  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().array() += ridge;
  const Eigen::MatrixXd rhs = x.transpose() * y;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ridge == 0.0) {
    const auto diag = ldlt.vectorD().cwiseAbs();
    const double largest = diag.maxCoeff();
    if (ldlt.info() != Eigen::Success || !(diag.minCoeff() > largest * 1e-12 * static_cast<double>(p))) {
      throw SingularityError("fit_least_squares: normal equations are singular; use ridge > 0");
    }
  }
  const Eigen::MatrixXd w = ldlt.solve(rhs);
  if (ldlt.info() != Eigen::Success || !w.allFinite()) {
    throw SingularityError("fit_least_squares: failed to solve the normal equations");
  }

  Affine layer{Tensor({k, d}), Tensor({k})};
  for (std::size_t o = 0; o < k; ++o) {
    for (std::size_t i = 0; i < d; ++i) layer.weight.at(o, i) = w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(o));
    layer.bias[o] = fit_bias ? w(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(o)) : 0.0;
  }
  return Model({std::move(layer)});
}

Model fit_least_squares(const Dataset& data, std::size_t num_classes, double ridge) {
  const std::size_t n = data.size();
  if (n == 0) throw Error("fit_least_squares: dataset is empty");
  Tensor targets = num_classes <= 2 ? Tensor({n}) : Tensor({n, num_classes});
  for (std::size_t s = 0; s < n; ++s) {
    if (num_classes <= 2) {
      targets[s] = data.labels[s] == 0 ? 0.0 : 1.0;
    } else {
      targets.at(s, data.labels[s]) = 1.0;
    }
  }
  return fit_least_squares(data.features, targets, ridge, true);
}

std::vector<std::uint32_t> predict(const Model& model, const Tensor& features) {
  const Tensor out = forward(model, features);
  const std::size_t n = out.dim(0);
  const std::size_t k = out.dim(1);
  std::vector<std::uint32_t> labels(n);
  for (std::size_t s = 0; s < n; ++s) {
    auto row = out.row(s);
    if (k == 1) {
      labels[s] = row[0] >= 0.5 ? 1U : 0U;
    } else {
      labels[s] = static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
  }
  return labels;
}

double accuracy(const Model& model, const Dataset& data) {
  if (data.size() == 0) throw Error("accuracy: dataset is empty");
  const auto predicted = predict(model, data.features);
  std::size_t correct = 0;
  for (std::size_t s = 0; s < predicted.size(); ++s) correct += predicted[s] == data.labels[s];
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace roar
