#include "roar/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "roar/errors.hpp"
#include "roar/rng.hpp"

namespace roar {

ToyDataset generate_toy(const ToyConfig& config) {
  if (config.dim == 0 || config.n_informative == 0 || config.n_informative > config.dim) {
    throw Error(fmt::format("generate_toy: need 0 < n_informative ({}) <= dim ({})",
                            config.n_informative, config.dim));
  }
  Rng rng(config.seed);
  ToyDataset out;
  out.n_informative = config.n_informative;
  out.a.resize(config.dim);
  out.d.resize(config.dim);
  for (std::size_t i = 0; i < config.dim; ++i) {
    const double v = rng.normal();
    out.a[i] = i < config.n_informative ? v : 0.0;
  }
  for (double& v : out.d) v = rng.normal();

  auto make_split = [&](std::size_t n) {
    Dataset split{Tensor({n, config.dim}), std::vector<std::uint32_t>(n)};
    for (std::size_t s = 0; s < n; ++s) {
      const double z = rng.normal();
      const double eta = rng.normal();
      auto row = split.features.row(s);
      for (std::size_t i = 0; i < config.dim; ++i) {
        const double eps = rng.normal();
        row[i] = out.a[i] * z / 10.0 + out.d[i] * eta + eps / 10.0;
      }
      split.labels[s] = z > 0.0 ? 1U : 0U;
    }
    return split;
  };
  out.data.train = make_split(config.n_train);
  out.data.test = make_split(config.n_test);
  out.data.num_classes = 2;
  out.data.normalization = Normalization::identity(1);
  out.data.source_id = fmt::format("toy:dim{}:inf{}:n{}+{}:seed{}", config.dim,
                                   config.n_informative, config.n_train, config.n_test,
                                   config.seed);
  return out;
}

const char* toy_ranking_name(ToyRanking variant) {
  switch (variant) {
    case ToyRanking::GroundTruth:
      return "ground-truth";
    case ToyRanking::Inverted:
      return "inverted";
    case ToyRanking::Random:
      return "random";
  }
  return "?";
}

Ranking ground_truth_ranking(const ToyDataset& dataset, ToyRanking variant, std::uint64_t seed) {
  if (dataset.a.empty()) throw MetadataError("ground_truth_ranking: dataset has no coefficients");
  std::vector<double> magnitude(dataset.a.size());
  std::transform(dataset.a.begin(), dataset.a.end(), magnitude.begin(),
                 [](double v) { return std::abs(v); });
  Ranking ranking = rank_scores(magnitude);
  switch (variant) {
    case ToyRanking::GroundTruth:
      break;
    case ToyRanking::Inverted:
      std::reverse(ranking.order.begin(), ranking.order.end());
      break;
    case ToyRanking::Random: {
      std::iota(ranking.order.begin(), ranking.order.end(), std::size_t{0});
      Rng rng(seed);
      rng.shuffle(ranking.order);
      break;
    }
  }
  return ranking;
}

}  // namespace roar
