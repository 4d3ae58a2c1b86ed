#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "roar/dataset.hpp"
#include "roar/model.hpp"
#include "roar/tensor.hpp"

namespace roar {

/// Per-feature importance scores for one input sample.
struct ImportanceEstimate {
  Tensor scores;
  std::string estimator_id;
};

struct EnsembleConfig {
  std::size_t samples = 15;
  double noise_stddev = 0.0;
  std::uint64_t seed = 0;
};

/// Riemann approximation of integrated gradients. An empty reference means
/// the all-zeros input.
struct IGConfig {
  std::size_t steps = 25;
  Tensor reference;
};

enum class BaseMethod { Gradient, IntegratedGradients, GuidedBackprop };
enum class EnsembleMode { SmoothGrad, SmoothGradSquared, VarGrad };

ImportanceEstimate estimate_grad(const Model& model, const Tensor& x, OutputTarget target);
ImportanceEstimate estimate_gb(const Model& model, const Tensor& x, OutputTarget target);
ImportanceEstimate estimate_ig(const Model& model, const Tensor& x, OutputTarget target,
                               const IGConfig& config = {});
ImportanceEstimate estimate_base(BaseMethod method, const Model& model, const Tensor& x,
                                 OutputTarget target, const IGConfig& ig = {});

/// Mean, mean of squares, and population variance of J base estimates taken
/// at x + noise. All three come from the same noise draws.
struct EnsembleMoments {
  Tensor mean;
  Tensor mean_square;
  Tensor variance;
};

EnsembleMoments ensemble_moments(BaseMethod base, const Model& model, const Tensor& x,
                                 OutputTarget target, const EnsembleConfig& config,
                                 const IGConfig& ig = {});

/// SmoothGrad (mean), SmoothGrad-Squared (mean of squares) or VarGrad
/// (variance) over `config.samples` noisy copies of `x`.
ImportanceEstimate ensemble(BaseMethod base, EnsembleMode mode, const Model& model,
                            const Tensor& x, OutputTarget target, const EnsembleConfig& config,
                            const IGConfig& ig = {});

ImportanceEstimate square_estimate(const ImportanceEstimate& estimate);

/// Model-independent control: i.i.d. uniform(0, 1) scores.
ImportanceEstimate control_random(const Shape& sample_shape, std::uint64_t seed);

/// Model-independent control: Sobel gradient magnitude of the channel-mean
/// image (replicate padding), broadcast to every channel. `image` may be
/// flat or (H, W, C); `shape` supplies the layout.
ImportanceEstimate control_sobel(const Tensor& image, const std::optional<ImageShape>& shape);

/// Parsed estimator identifier, e.g. "grad", "sg-sq-ig", "var-gb", "sq-grad",
/// "random", "sobel".
struct EstimatorSpec {
  enum class Kind { Base, Ensemble, Squared, Random, Sobel };

  Kind kind = Kind::Base;
  BaseMethod base = BaseMethod::Gradient;
  EnsembleMode ensemble = EnsembleMode::SmoothGrad;

  static EstimatorSpec parse(const std::string& id);
  std::string id() const;
  bool uses_model() const { return kind != Kind::Random && kind != Kind::Sobel; }

  friend bool operator==(const EstimatorSpec&, const EstimatorSpec&) = default;
};

/// Knobs shared by every estimator evaluation of one experiment.
struct EstimatorSettings {
  std::size_t ensemble_samples = 15;
  double noise_stddev = 0.0;
  IGConfig ig;
};

/// Evaluates `spec` on one sample. `sample_seed` drives the ensemble noise
/// and the random control.
ImportanceEstimate compute_estimate(const EstimatorSpec& spec, const Model& model,
                                    const Tensor& x, OutputTarget target,
                                    const EstimatorSettings& settings,
                                    const std::optional<ImageShape>& image,
                                    std::uint64_t sample_seed);

}  // namespace roar
