#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "roar/dataset.hpp"
#include "roar/pipeline.hpp"

namespace roar {

struct ToyConfig {
  std::size_t n_train = 10000;
  std::size_t n_test = 2000;
  std::size_t dim = 16;
  std::size_t n_informative = 4;
  std::uint64_t seed = 0;

  friend bool operator==(const ToyConfig&, const ToyConfig&) = default;
};

/// Linear toy task: x = a z / 10 + d eta + eps / 10, y = (z > 0), where a
/// and d are drawn once per dataset and only the first `n_informative`
/// entries of a are nonzero.
struct ToyDataset {
  SplitDataset data;
  std::vector<double> a;
  std::vector<double> d;
  std::size_t n_informative = 0;
};

ToyDataset generate_toy(const ToyConfig& config);

enum class ToyRanking { GroundTruth, Inverted, Random };

const char* toy_ranking_name(ToyRanking variant);

/// GroundTruth orders features by |a_i| descending (ties by index), Inverted
/// reverses it, Random is a seeded shuffle. Every sample shares the ranking.
Ranking ground_truth_ranking(const ToyDataset& dataset, ToyRanking variant,
                             std::uint64_t seed = 0);

}  // namespace roar
