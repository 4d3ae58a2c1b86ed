#pragma once

#include <cstddef>
#include <cstdint>
#include <variant>
#include <vector>

#include "roar/dataset.hpp"
#include "roar/model.hpp"

namespace roar {

enum class LossKind { SoftmaxCrossEntropy, MeanSquaredError };

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t steps = 1000;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::SoftmaxCrossEntropy;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Multilayer perceptron with the given hidden widths. Input and output
/// widths come from the data.
struct MlpSpec {
  std::vector<std::size_t> hidden;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// Closed-form ridge regression onto the labels (binary) or one-hot targets.
struct LeastSquaresSpec {
  double ridge = 1e-8;

  friend bool operator==(const LeastSquaresSpec&, const LeastSquaresSpec&) = default;
};

using ModelSpec = std::variant<MlpSpec, LeastSquaresSpec>;

struct TrainResult {
  Model model;
  double accuracy = 0.0;
};

/// Trains from a seeded random initialization with minibatch SGD and
/// reports accuracy on `data.test`. Equal inputs give bit-identical results.
TrainResult train(const MlpSpec& spec, const SplitDataset& data, const TrainConfig& config);
/// Dispatches on the spec. Least squares ignores everything in `config`.
TrainResult train(const ModelSpec& spec, const SplitDataset& data, const TrainConfig& config);

/// Single-affine model minimising ||Xw - y||^2 + ridge ||w||^2 via the
/// normal equations. `targets` is (n) or (n, k). With `fit_bias` an
/// intercept column is appended to X (and is regularised with the rest).
Model fit_least_squares(const Tensor& features, const Tensor& targets, double ridge,
                        bool fit_bias = true);
/// Binary labels are regressed directly (one output, thresholded at 0.5);
/// more classes use one-hot targets and argmax.
Model fit_least_squares(const Dataset& data, std::size_t num_classes, double ridge);

/// Class predictions: one output is thresholded at 0.5, several use argmax
/// with ties going to the lowest index.
std::vector<std::uint32_t> predict(const Model& model, const Tensor& features);
double accuracy(const Model& model, const Dataset& data);

}  // namespace roar
