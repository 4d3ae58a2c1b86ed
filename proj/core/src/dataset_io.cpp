#include "roar/dataset_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "roar/errors.hpp"
#include "roar/rng.hpp"

namespace roar {
namespace {

constexpr std::uint32_t kLabelMagic = 0x00000801;
constexpr std::uint32_t kImageMagic3 = 0x00000803;
constexpr std::uint32_t kImageMagic4 = 0x00000804;

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(fmt::format("cannot open '{}'", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) {
    throw LengthError(fmt::format("'{}': header truncated", path.string()), offset + 4,
                      bytes.size());
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                              static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), b.size());
}

struct IdxPayload {
  std::vector<std::size_t> dims;
  std::vector<unsigned char> bytes;
  std::size_t offset = 0;
};

IdxPayload read_idx(const std::filesystem::path& path, std::initializer_list<std::uint32_t> magics) {
  IdxPayload p;
  p.bytes = read_bytes(path);
  const std::uint32_t magic = read_be32(p.bytes, 0, path);
  if (std::find(magics.begin(), magics.end(), magic) == magics.end()) {
    throw FormatError(fmt::format("'{}': bad IDX magic 0x{:08x}", path.string(), magic));
  }
  const std::size_t ndims = magic & 0xff;
  std::size_t expected = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    p.dims.push_back(read_be32(p.bytes, 4 + 4 * d, path));
    expected *= p.dims.back();
  }
  p.offset = 4 + 4 * ndims;
  if (p.bytes.size() - p.offset != expected) {
    throw LengthError(fmt::format("'{}': payload has {} bytes, header promises {}", path.string(),
                                  p.bytes.size() - p.offset, expected),
                      expected, p.bytes.size() - p.offset);
  }
  return p;
}

}  // namespace

IdxSplit load_idx(const std::filesystem::path& images_path,
                  const std::filesystem::path& labels_path) {
  const IdxPayload images = read_idx(images_path, {kImageMagic3, kImageMagic4});
  const IdxPayload labels = read_idx(labels_path, {kLabelMagic});
  const std::size_t n = images.dims[0];
  if (labels.dims[0] != n) {
    throw DimensionError(fmt::format("'{}' has {} images but '{}' has {} labels",
                                     images_path.string(), n, labels_path.string(),
                                     labels.dims[0]));
  }
  IdxSplit out;
  out.shape = {images.dims[1], images.dims[2], images.dims.size() == 4 ? images.dims[3] : 1};
  const std::size_t d = out.shape.size();
  out.data.features = Tensor({n, d});
  auto values = out.data.features.data();
  for (std::size_t i = 0; i < n * d; ++i) {
    values[i] = static_cast<double>(images.bytes[images.offset + i]) / 255.0;
  }
  out.data.labels.resize(n);
  std::uint32_t max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out.data.labels[i] = labels.bytes[labels.offset + i];
    max_label = std::max(max_label, out.data.labels[i]);
  }
  out.num_classes = n == 0 ? 0 : max_label + 1;
  return out;
}

SplitDataset load_idx_dataset(const std::filesystem::path& train_images,
                              const std::filesystem::path& train_labels,
                              const std::filesystem::path& test_images,
                              const std::filesystem::path& test_labels) {
  IdxSplit train = load_idx(train_images, train_labels);
  IdxSplit test = load_idx(test_images, test_labels);
  if (!(train.shape == test.shape)) {
    throw MetadataError("train and test IDX images have different shapes");
  }
  SplitDataset out;
  out.train = std::move(train.data);
  out.test = std::move(test.data);
  out.num_classes = std::max(train.num_classes, test.num_classes);
  out.image = train.shape;
  out.normalization = {std::vector<double>(train.shape.channels, 0.0),
                       std::vector<double>(train.shape.channels, 255.0)};
  out.source_id = fmt::format("idx:{}", train_images.filename().string());
  out.validate();
  return out;
}

void write_idx_images(const std::filesystem::path& path, const Tensor& raw, const ImageShape& shape) {
  if (raw.rank() != 2 || raw.dim(1) != shape.size()) {
    throw DimensionError("write_idx_images: raw values do not match the image shape");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(fmt::format("cannot write '{}'", path.string()));
  const bool color = shape.channels != 1;
  put_be32(out, color ? kImageMagic4 : kImageMagic3);
  put_be32(out, static_cast<std::uint32_t>(raw.dim(0)));
  put_be32(out, static_cast<std::uint32_t>(shape.height));
  put_be32(out, static_cast<std::uint32_t>(shape.width));
  if (color) put_be32(out, static_cast<std::uint32_t>(shape.channels));
  std::vector<char> payload(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double v = raw[i];
    if (!(v >= 0.0 && v <= 255.0) || v != std::round(v)) {
      throw FormatError(fmt::format("write_idx_images: value {} is not a byte", v));
    }
    payload[i] = static_cast<char>(static_cast<unsigned char>(v));
  }
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint32_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(fmt::format("cannot write '{}'", path.string()));
  put_be32(out, kLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (std::uint32_t label : labels) {
    if (label > 255) throw FormatError("write_idx_labels: label does not fit in a byte");
    out.put(static_cast<char>(label));
  }
}

Tensor denormalize(const Tensor& features, const Normalization& norm, std::size_t channels) {
  Tensor out = features;
  auto v = out.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t c = i % channels;
    v[i] = v[i] * norm.scale[c] + norm.offset[c];
  }
  return out;
}

Tensor normalize(const Tensor& raw, const Normalization& norm, std::size_t channels) {
  Tensor out = raw;
  auto v = out.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t c = i % channels;
    v[i] = (v[i] - norm.offset[c]) / norm.scale[c];
  }
  return out;
}

void save_idx_dataset(const SplitDataset& data, const std::filesystem::path& dir) {
  if (!data.image) throw MetadataError("save_idx_dataset: dataset has no image metadata");
  std::filesystem::create_directories(dir);
  const std::size_t c = data.image->channels;
  for (std::size_t i = 0; i < 2; ++i) {
    const Dataset& split = i == 0 ? data.train : data.test;
    const std::string name = i == 0 ? "train" : "test";
    Tensor raw = denormalize(split.features, data.normalization, c);
    for (double& v : raw.data()) v = std::round(v);
    write_idx_images(dir / (name + "-images.idx"), raw, *data.image);
    write_idx_labels(dir / (name + "-labels.idx"), split.labels);
  }
}

std::vector<double> channel_means(const SplitDataset& data) {
  if (data.train.size() == 0) throw Error("channel_means: training split is empty");
  const std::size_t channels = data.image ? data.image->channels : 1;
  std::vector<double> sums(channels, 0.0);
  const auto values = data.train.features.data();
  for (std::size_t i = 0; i < values.size(); ++i) sums[i % channels] += values[i];
  const double count = static_cast<double>(values.size() / channels);
  for (double& s : sums) s /= count;
  return sums;
}

std::vector<double> feature_means(const Dataset& split) {
  if (split.size() == 0) throw Error("feature_means: split is empty");
  const std::size_t d = split.feature_dim();
  std::vector<double> sums(d, 0.0);
  for (std::size_t s = 0; s < split.size(); ++s) {
    auto row = split.features.row(s);
    for (std::size_t i = 0; i < d; ++i) sums[i] += row[i];
  }
  for (double& v : sums) v /= static_cast<double>(split.size());
  return sums;
}

SplitDataset generate_bars(const BarsConfig& config) {
  if (config.height == 0 || config.width == 0 || config.channels == 0) {
    throw Error("generate_bars: image dimensions must be positive");
  }
  if (config.bar_width == 0 || config.bar_width > std::min(config.height, config.width)) {
    throw Error("generate_bars: bar_width must fit inside the image");
  }
  const ImageShape shape{config.height, config.width, config.channels};
  Rng rng(config.seed);

  auto make_split = [&](std::size_t n) {
    Dataset split{Tensor({n, shape.size()}), std::vector<std::uint32_t>(n)};
    for (std::size_t s = 0; s < n; ++s) {
      const auto label = static_cast<std::uint32_t>(rng.uniform_index(2));
      const std::size_t extent = label == 0 ? config.height : config.width;
      const std::size_t center = (extent - config.bar_width) / 2;
      const std::size_t lo = center - std::min(config.jitter, center);
      const std::size_t hi = std::min(center + config.jitter, extent - config.bar_width);
      const std::size_t offset = lo + rng.uniform_index(hi - lo + 1);
      auto row = split.features.row(s);
      for (std::size_t r = 0; r < config.height; ++r) {
        for (std::size_t c = 0; c < config.width; ++c) {
          const std::size_t along = label == 0 ? r : c;
          const bool on_bar = along >= offset && along < offset + config.bar_width;
          const double background = config.texture > 0.0 && rng.uniform() < 0.5 ? config.texture : 0.0;
          for (std::size_t ch = 0; ch < config.channels; ++ch) {
            const double v = (on_bar ? 1.0 : background) + rng.normal(0.0, config.noise);
            row[(r * config.width + c) * config.channels + ch] = std::clamp(v, 0.0, 1.0);
          }
        }
      }
      split.labels[s] = label;
    }
    return split;
  };

  SplitDataset out;
  out.train = make_split(config.n_train);
  out.test = make_split(config.n_test);
  out.num_classes = 2;
  out.image = shape;
  out.normalization = Normalization::identity(config.channels);
  out.source_id = fmt::format("bars:{}x{}x{}:w{}:j{}:noise{}:seed{}", config.height, config.width,
                              config.channels, config.bar_width, config.jitter, config.noise, config.seed);
  return out;
}

}  // namespace roar
