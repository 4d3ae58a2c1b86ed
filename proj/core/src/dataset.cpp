#include "roar/dataset.hpp"

#include <fmt/format.h>

#include "roar/errors.hpp"

namespace roar {

Shape SplitDataset::sample_shape() const {
  if (image) return image->sample_shape();
  return {feature_dim()};
}

void SplitDataset::validate() const {
  for (const Dataset* split : {&train, &test}) {
    const char* name = split == &train ? "train" : "test";
    if (split->features.rank() != 2 || split->features.dim(0) != split->labels.size()) {
      throw DimensionError(fmt::format("{} split: features {} do not match {} labels", name,
                                       shape_string(split->features.shape()),
                                       split->labels.size()));
    }
    for (std::size_t i = 0; i < split->labels.size(); ++i) {
      if (split->labels[i] >= num_classes) {
        throw Error(fmt::format("{} split: label {} of sample {} is outside {} classes", name,
                                split->labels[i], i, num_classes));
      }
    }
  }
  if (train.feature_dim() != test.feature_dim()) {
    throw DimensionError(fmt::format("train has {} features but test has {}",
                                     train.feature_dim(), test.feature_dim()));
  }
  if (image && image->size() != train.feature_dim()) {
    throw MetadataError(fmt::format("image shape {}x{}x{} does not cover {} features",
                                    image->height, image->width, image->channels,
                                    train.feature_dim()));
  }
}

}  // namespace roar
