#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "roar/dataset_io.hpp"
#include "roar/pipeline.hpp"
#include "roar/synthetic.hpp"
#include "roar/train.hpp"

namespace roar {

enum class DatasetKind { Toy, Idx, SyntheticImage };

struct DatasetSpec {
  DatasetKind kind = DatasetKind::Toy;
  ToyConfig toy;
  BarsConfig bars;
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct EstimatorOptions {
  std::size_t samples = 15;
  /// Ensemble noise stddev as a fraction of the (max - min) input range.
  double noise_fraction = 0.15;
  std::size_t ig_steps = 25;

  friend bool operator==(const EstimatorOptions&, const EstimatorOptions&) = default;
};

struct EstimatorOverride {
  std::optional<std::size_t> samples;
  std::optional<double> noise_fraction;
  std::optional<std::size_t> ig_steps;

  friend bool operator==(const EstimatorOverride&, const EstimatorOverride&) = default;
};

/// Everything needed to run one benchmark grid.
///
/// Text form (sections, `key = value`, `#` comments):
///
///   [dataset]      kind, train_samples, test_samples, seed, dim, informative,
///                  height, width, channels, bar_width, jitter, noise,
///                  train_images, train_labels, test_images, test_labels
///   [estimators]   ids, samples, noise_fraction, ig_steps
///   [estimator ID] samples, noise_fraction, ig_steps  (per-estimator overrides)
///   [grid]         thresholds, modes, runs_per_point
///   [model]        kind (mlp | least-squares), hidden, ridge
///   [train]        learning_rate, steps, batch_size, loss
///   [experiment]   seed, output, workers
struct ExperimentConfig {
  DatasetSpec dataset;
  std::vector<std::string> estimators;
  EstimatorOptions estimator_defaults;
  std::map<std::string, EstimatorOverride> estimator_overrides;
  std::vector<double> thresholds{0.0, 0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<ModificationMode> modes{ModificationMode::Roar, ModificationMode::Kar};
  std::size_t runs_per_point = 5;
  ModelSpec model = MlpSpec{{64}};
  TrainConfig train{0.1, 2000, 64, 0, LossKind::SoftmaxCrossEntropy};
  std::uint64_t seed = 0;
  std::string output = "results";
  std::size_t workers = 1;

  EstimatorOptions options_for(const std::string& estimator_id) const;
  /// Throws ConfigError for constraint violations (sorted thresholds in
  /// [0, 1], unique known estimators, resolvable paths, ...).
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Parses and (unless `validate` is false) validates. Unknown sections or
/// keys, malformed values, and constraint violations raise ConfigError
/// naming the key and line.
ExperimentConfig parse_config(const std::string& text, bool validate = true);
/// Canonical text with every default spelled out; parse_config inverts it.
std::string serialize_config(const ExperimentConfig& config);

}  // namespace roar
