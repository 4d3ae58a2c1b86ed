#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "roar/dataset.hpp"

namespace roar {

/// One split read from an IDX image/label pair, scaled to [0, 1].
struct IdxSplit {
  Dataset data;
  ImageShape shape;
  std::size_t num_classes = 0;
};

/// Parses big-endian IDX files: an unsigned-byte image file with magic
/// 0x00000803 (n, h, w) or 0x00000804 (n, h, w, c) and a label file with
/// magic 0x00000801 (n). Pixel values are divided by 255.
IdxSplit load_idx(const std::filesystem::path& images_path,
                  const std::filesystem::path& labels_path);

/// Loads both splits and records the [0, 255] -> [0, 1] normalization.
SplitDataset load_idx_dataset(const std::filesystem::path& train_images,
                              const std::filesystem::path& train_labels,
                              const std::filesystem::path& test_images,
                              const std::filesystem::path& test_labels);

/// Writes raw byte values (n, h*w*c) as an IDX image file. Values must be
/// integers in [0, 255].
void write_idx_images(const std::filesystem::path& path, const Tensor& raw, const ImageShape& shape);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint32_t>& labels);

/// Writes `data` as four IDX files (train/test images/labels) in `dir`,
/// undoing the normalization. Inverse of load_idx_dataset.
void save_idx_dataset(const SplitDataset& data, const std::filesystem::path& dir);

/// raw = value * scale[c] + offset[c] applied to an (n, h*w*c) matrix.
Tensor denormalize(const Tensor& features, const Normalization& norm, std::size_t channels);
Tensor normalize(const Tensor& raw, const Normalization& norm, std::size_t channels);

/// Mean of every train value per channel (one value for non-image data).
std::vector<double> channel_means(const SplitDataset& data);
/// Mean of every feature over the split.
std::vector<double> feature_means(const Dataset& split);

/// Two-class oriented bars: class 0 holds a horizontal bar, class 1 a
/// vertical one, at a random offset, plus Gaussian pixel noise, clipped to
/// [0, 1].
struct BarsConfig {
  std::size_t n_train = 2000;
  std::size_t n_test = 1000;
  std::size_t height = 12;
  std::size_t width = 12;
  std::size_t channels = 1;
  std::size_t bar_width = 2;
  /// Bar offsets are drawn uniformly from center +- jitter (clipped to the image).
  std::size_t jitter = 2;
  double noise = 0.1;
  /// Background pixels are 0 or `texture` with equal probability.
  double texture = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const BarsConfig&, const BarsConfig&) = default;
};

SplitDataset generate_bars(const BarsConfig& config);

}  // namespace roar
