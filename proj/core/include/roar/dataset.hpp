#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "roar/tensor.hpp"

namespace roar {

/// Height/width/channel layout of one image sample. Samples are stored
/// flattened in (row, column, channel) order, channel fastest.
struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;

  std::size_t pixels() const { return height * width; }
  std::size_t size() const { return height * width * channels; }
  Shape sample_shape() const { return {height, width, channels}; }

  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// Maps stored values back to raw ones: raw = value * scale[c] + offset[c].
struct Normalization {
  std::vector<double> offset;
  std::vector<double> scale;

  static Normalization identity(std::size_t channels) {
    return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
  }
  friend bool operator==(const Normalization&, const Normalization&) = default;
};

/// One split: an (n, features) matrix and n integer labels.
struct Dataset {
  Tensor features;
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t feature_dim() const { return features.rank() == 2 ? features.dim(1) : 0; }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Train and test splits with shared metadata. `image` is set for image
/// data and absent for plain feature vectors.
struct SplitDataset {
  Dataset train;
  Dataset test;
  std::size_t num_classes = 2;
  std::optional<ImageShape> image;
  Normalization normalization;
  std::string source_id;

  std::size_t feature_dim() const { return train.feature_dim(); }
  /// Shape of a single sample: (H, W, C) for images, (features) otherwise.
  Shape sample_shape() const;
  /// Throws roar::Error if shapes, labels, or metadata disagree.
  void validate() const;

  friend bool operator==(const SplitDataset&, const SplitDataset&) = default;
};

}  // namespace roar
