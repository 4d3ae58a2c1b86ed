#include "roar/estimators.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "roar/errors.hpp"
#include "roar/rng.hpp"

namespace roar {
namespace {

const char* base_name(BaseMethod method) {
  switch (method) {
    case BaseMethod::Gradient:
      return "grad";
    case BaseMethod::IntegratedGradients:
      return "ig";
    case BaseMethod::GuidedBackprop:
      return "gb";
  }
  return "?";
}

const char* ensemble_prefix(EnsembleMode mode) {
  switch (mode) {
    case EnsembleMode::SmoothGrad:
      return "sg";
    case EnsembleMode::SmoothGradSquared:
      return "sg-sq";
    case EnsembleMode::VarGrad:
      return "var";
  }
  return "?";
}

std::string ensemble_id(BaseMethod base, EnsembleMode mode) {
  return fmt::format("{}-{}", ensemble_prefix(mode), base_name(base));
}

}  // namespace

ImportanceEstimate estimate_grad(const Model& model, const Tensor& x, OutputTarget target) {
  return {input_gradient(model, x, target, GradientMode::Standard), "grad"};
}

ImportanceEstimate estimate_gb(const Model& model, const Tensor& x, OutputTarget target) {
  return {input_gradient(model, x, target, GradientMode::Guided), "gb"};
}

ImportanceEstimate estimate_ig(const Model& model, const Tensor& x, OutputTarget target,
                               const IGConfig& config) {
  if (config.steps == 0) throw Error("estimate_ig: steps must be at least 1");
  const Tensor reference = config.reference.empty() ? Tensor(x.shape()) : config.reference;
  if (reference.shape() != x.shape()) {
    throw DimensionError(fmt::format("estimate_ig: reference {} does not match input {}",
                                     shape_string(reference.shape()), shape_string(x.shape())));
  }
  reference.require_finite("estimate_ig reference");

  const std::size_t k = config.steps;
  Tensor point(x.shape());
  Tensor total(x.shape());
  for (std::size_t j = 1; j <= k; ++j) {
    const double alpha = static_cast<double>(j) / static_cast<double>(k);
    for (std::size_t i = 0; i < x.size(); ++i) {
      point[i] = reference[i] + alpha * (x[i] - reference[i]);
    }
    const Tensor g = input_gradient(model, point, target, GradientMode::Standard);
    for (std::size_t i = 0; i < x.size(); ++i) total[i] += g[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    total[i] = (x[i] - reference[i]) * total[i] / static_cast<double>(k);
  }
  return {std::move(total), "ig"};
}

ImportanceEstimate estimate_base(BaseMethod method, const Model& model, const Tensor& x,
                                 OutputTarget target, const IGConfig& ig) {
  switch (method) {
    case BaseMethod::Gradient:
      return estimate_grad(model, x, target);
    case BaseMethod::GuidedBackprop:
      return estimate_gb(model, x, target);
    case BaseMethod::IntegratedGradients:
      return estimate_ig(model, x, target, ig);
  }
  throw Error("estimate_base: unknown method");
}

EnsembleMoments ensemble_moments(BaseMethod base, const Model& model, const Tensor& x,
                                 OutputTarget target, const EnsembleConfig& config,
                                 const IGConfig& ig) {
  if (config.samples == 0) throw Error("ensemble: samples must be at least 1");
  if (!(config.noise_stddev >= 0.0) || !std::isfinite(config.noise_stddev)) {
    throw Error("ensemble: noise_stddev must be finite and non-negative");
  }

  // Without noise every draw equals the clean estimate.
  if (config.noise_stddev == 0.0) {
    Tensor g = estimate_base(base, model, x, target, ig).scores;
    Tensor sq = g;
    for (double& v : sq.data()) v = v * v;
    return {std::move(g), std::move(sq), Tensor(x.shape())};
  }

  const std::size_t n = x.size();
  const std::size_t samples = config.samples;
  Rng rng(config.seed);
  std::vector<Tensor> draws;
  draws.reserve(samples);
  Tensor noisy(x.shape());
  for (std::size_t j = 0; j < samples; ++j) {
    for (std::size_t i = 0; i < n; ++i) noisy[i] = x[i] + rng.normal(0.0, config.noise_stddev);
    draws.push_back(estimate_base(base, model, noisy, target, ig).scores);
  }

  const double inv = 1.0 / static_cast<double>(samples);
  EnsembleMoments m{Tensor(x.shape()), Tensor(x.shape()), Tensor(x.shape())};
  for (const Tensor& g : draws) {
    for (std::size_t i = 0; i < n; ++i) {
      m.mean[i] += g[i];
      m.mean_square[i] += g[i] * g[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    m.mean[i] *= inv;
    m.mean_square[i] *= inv;
  }
  for (const Tensor& g : draws) {
    for (std::size_t i = 0; i < n; ++i) {
      const double dev = g[i] - m.mean[i];
      m.variance[i] += dev * dev;
    }
  }
  for (double& v : m.variance.data()) v *= inv;
  return m;
}

ImportanceEstimate ensemble(BaseMethod base, EnsembleMode mode, const Model& model,
                            const Tensor& x, OutputTarget target, const EnsembleConfig& config,
                            const IGConfig& ig) {
  EnsembleMoments m = ensemble_moments(base, model, x, target, config, ig);
  Tensor scores;
  switch (mode) {
    case EnsembleMode::SmoothGrad:
      scores = std::move(m.mean);
      break;
    case EnsembleMode::SmoothGradSquared:
      scores = std::move(m.mean_square);
      break;
    case EnsembleMode::VarGrad:
      scores = std::move(m.variance);
      break;
  }
  scores.require_finite("ensemble");
  return {std::move(scores), ensemble_id(base, mode)};
}

ImportanceEstimate square_estimate(const ImportanceEstimate& estimate) {
  ImportanceEstimate out{estimate.scores, "sq-" + estimate.estimator_id};
  for (double& v : out.scores.data()) v = v * v;
  return out;
}

ImportanceEstimate control_random(const Shape& sample_shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor scores(sample_shape);
  for (double& v : scores.data()) v = rng.uniform();
  return {std::move(scores), "random"};
}

ImportanceEstimate control_sobel(const Tensor& image, const std::optional<ImageShape>& shape) {
  if (!shape) throw MetadataError("control_sobel: dataset carries no image metadata");
  const std::size_t h = shape->height;
  const std::size_t w = shape->width;
  const std::size_t c = shape->channels;
  if (h == 0 || w == 0 || c == 0 || image.size() != shape->size()) {
    throw MetadataError(fmt::format("control_sobel: image of {} values does not fit {}x{}x{}",
                                    image.size(), h, w, c));
  }

  std::vector<double> gray(h * w, 0.0);
  for (std::size_t p = 0; p < h * w; ++p) {
    double sum = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) sum += image[p * c + ch];
    gray[p] = sum / static_cast<double>(c);
  }
  auto at = [&](std::ptrdiff_t r, std::ptrdiff_t col) {
    r = std::clamp<std::ptrdiff_t>(r, 0, static_cast<std::ptrdiff_t>(h) - 1);
    col = std::clamp<std::ptrdiff_t>(col, 0, static_cast<std::ptrdiff_t>(w) - 1);
    return gray[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(col)];
  };
  // Each response is a difference of two smoothed sums computed in the same
  // order, so flat regions give exactly zero.
  Tensor scores(shape->sample_shape());
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t col = 0; col < w; ++col) {
      const auto rr = static_cast<std::ptrdiff_t>(r);
      const auto cc = static_cast<std::ptrdiff_t>(col);
      const double gx = (at(rr - 1, cc + 1) + 2.0 * at(rr, cc + 1) + at(rr + 1, cc + 1)) -
                        (at(rr - 1, cc - 1) + 2.0 * at(rr, cc - 1) + at(rr + 1, cc - 1));
      const double gy = (at(rr + 1, cc - 1) + 2.0 * at(rr + 1, cc) + at(rr + 1, cc + 1)) -
                        (at(rr - 1, cc - 1) + 2.0 * at(rr - 1, cc) + at(rr - 1, cc + 1));
      const double magnitude = std::sqrt(gx * gx + gy * gy);
      for (std::size_t ch = 0; ch < c; ++ch) scores[(r * w + col) * c + ch] = magnitude;
    }
  }
  return {std::move(scores), "sobel"};
}

EstimatorSpec EstimatorSpec::parse(const std::string& id) {
  auto parse_base = [&](std::string_view name) -> std::optional<BaseMethod> {
    if (name == "grad") return BaseMethod::Gradient;
    if (name == "ig") return BaseMethod::IntegratedGradients;
    if (name == "gb") return BaseMethod::GuidedBackprop;
    return std::nullopt;
  };
  EstimatorSpec spec;
  std::string_view rest = id;
  if (id == "random") {
    spec.kind = Kind::Random;
    return spec;
  }
  if (id == "sobel") {
    spec.kind = Kind::Sobel;
    return spec;
  }
  auto strip = [&](std::string_view prefix) {
    if (rest.starts_with(prefix)) {
      rest.remove_prefix(prefix.size());
      return true;
    }
    return false;
  };
  if (strip("sg-sq-")) {
    spec.kind = Kind::Ensemble;
    spec.ensemble = EnsembleMode::SmoothGradSquared;
  } else if (strip("sg-")) {
    spec.kind = Kind::Ensemble;
    spec.ensemble = EnsembleMode::SmoothGrad;
  } else if (strip("var-")) {
    spec.kind = Kind::Ensemble;
    spec.ensemble = EnsembleMode::VarGrad;
  } else if (strip("sq-")) {
    spec.kind = Kind::Squared;
  }
  const auto base = parse_base(rest);
  if (!base) throw Error(fmt::format("unknown estimator '{}'", id));
  spec.base = *base;
  return spec;
}

std::string EstimatorSpec::id() const {
  switch (kind) {
    case Kind::Base:
      return base_name(base);
    case Kind::Ensemble:
      return ensemble_id(base, ensemble);
    case Kind::Squared:
      return fmt::format("sq-{}", base_name(base));
    case Kind::Random:
      return "random";
    case Kind::Sobel:
      return "sobel";
  }
  return "?";
}

ImportanceEstimate compute_estimate(const EstimatorSpec& spec, const Model& model,
                                    const Tensor& x, OutputTarget target,
                                    const EstimatorSettings& settings,
                                    const std::optional<ImageShape>& image,
                                    std::uint64_t sample_seed) {
  ImportanceEstimate out;
  switch (spec.kind) {
    case EstimatorSpec::Kind::Base:
      out = estimate_base(spec.base, model, x, target, settings.ig);
      break;
    case EstimatorSpec::Kind::Squared:
      out = square_estimate(estimate_base(spec.base, model, x, target, settings.ig));
      break;
    case EstimatorSpec::Kind::Ensemble:
      out = ensemble(spec.base, spec.ensemble, model, x, target,
                     {settings.ensemble_samples, settings.noise_stddev, sample_seed}, settings.ig);
      break;
    case EstimatorSpec::Kind::Random:
      out = control_random(x.shape(), sample_seed);
      break;
    case EstimatorSpec::Kind::Sobel:
      out = control_sobel(x, image);
      out.scores = out.scores.reshaped(x.shape());
      break;
  }
  out.scores.require_finite(spec.id());
  out.estimator_id = spec.id();
  return out;
}

}  // namespace roar
