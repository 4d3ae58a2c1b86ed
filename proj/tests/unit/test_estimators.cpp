#include <algorithm>
#include <cmath>
#include <map>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "roar/errors.hpp"
#include "roar/estimators.hpp"
#include "roar/pipeline.hpp"
#include "roar/rng.hpp"
#include "test_util.hpp"

using namespace roar;

namespace {

Model single_affine(Rng& rng, std::size_t in, std::size_t out) { return Model::mlp(in, {}, out, rng); }

double chi2_p_value(const std::vector<double>& counts, double expected) {
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  const boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, chi2));
}

}  // namespace

TEST(Grad, LinearModelGivesWeightRow) {
  Rng rng(1);
  const Model m = single_affine(rng, 6, 3);
  const Tensor x = test::random_tensor({6}, rng);
  const ImportanceEstimate e = estimate_grad(m, x, {1});
  EXPECT_EQ(e.estimator_id, "grad");
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(e.scores[i], std::get<Affine>(m.layers()[0]).weight.at(1, i));
}

TEST(Grad, ZeroModelGivesZeroScores) {
  const Model m({Affine{Tensor({2, 4}), Tensor({2})}, Rectifier{}, Affine{Tensor({1, 2}), Tensor({1})}});
  const ImportanceEstimate e = estimate_grad(m, Tensor::from({1, 2, 3, 4}), {0});
  EXPECT_TRUE(std::all_of(e.scores.values().begin(), e.scores.values().end(), [](double v) { return v == 0.0; }));
}

TEST(Grad, MatchesFiniteDifferences) {
  Rng rng(2);
  for (int k = 0; k < 10; ++k) {
    const Model m = test::random_mlp(rng, 12);
    const Tensor x = test::random_tensor({m.input_dim()}, rng);
    if (oracle::kink_distance(m, x.values()) < 1e-3) continue;
    const auto fd = oracle::fd_gradient(m, x.values(), 0, 1e-5);
    EXPECT_LT(oracle::relative_error(estimate_grad(m, x, {0}).scores.values(), fd, 1e-8), 1e-4);
  }
}

TEST(GuidedBackprop, NoRectifiersEqualsGrad) {
  Rng rng(3);
  const Model m({Affine{test::random_tensor({4, 5}, rng), test::random_tensor({4}, rng)},
                 Affine{test::random_tensor({2, 4}, rng), test::random_tensor({2}, rng)}});
  const Tensor x = test::random_tensor({5}, rng);
  EXPECT_EQ(estimate_gb(m, x, {1}).scores, estimate_grad(m, x, {1}).scores);
}

TEST(GuidedBackprop, PositiveNetworkEqualsGrad) {
  Rng rng(4);
  Model m = Model::mlp(5, {7, 6}, 2, rng);
  for (Layer& layer : m.layers()) {
    if (auto* a = std::get_if<Affine>(&layer)) {
      for (double& w : a->weight.data()) w = std::abs(w);
    }
  }
  Tensor x = test::random_tensor({5}, rng);
  for (double& v : x.data()) v = std::abs(v);
  EXPECT_EQ(estimate_gb(m, x, {0}).scores, estimate_grad(m, x, {0}).scores);
}

TEST(IntegratedGradients, ZeroPathGivesZero) {
  Rng rng(5);
  const Model m = Model::mlp(4, {5}, 2, rng);
  const Tensor x = test::random_tensor({4}, rng);
  const ImportanceEstimate e = estimate_ig(m, x, {0}, IGConfig{25, x});
  EXPECT_TRUE(std::all_of(e.scores.values().begin(), e.scores.values().end(), [](double v) { return v == 0.0; }));
}

TEST(IntegratedGradients, LinearModelIsExact) {
  Rng rng(6);
  const Model m = single_affine(rng, 7, 2);
  const auto& w = std::get<Affine>(m.layers()[0]).weight;
  for (std::size_t k : {1u, 5u, 25u}) {
    const Tensor x = test::random_tensor({7}, rng);
    const Tensor ref = test::random_tensor({7}, rng);
    const ImportanceEstimate e = estimate_ig(m, x, {1}, IGConfig{k, ref});
    for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(e.scores[i], (x[i] - ref[i]) * w.at(1, i), 1e-10);
    const ImportanceEstimate zero_ref = estimate_ig(m, x, {1}, IGConfig{k, {}});
    for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(zero_ref.scores[i], x[i] * w.at(1, i), 1e-10);
  }
}

namespace {

// Affine stack without rectifiers: smooth, but not a single linear layer.
Model smooth_mlp(Rng& rng, std::size_t in) {
  std::vector<Layer> layers;
  const Model relu = Model::mlp(in, {8, 5}, 1, rng);
  for (const Layer& l : relu.layers()) {
    if (std::holds_alternative<Affine>(l)) layers.push_back(l);
  }
  return Model(layers);
}

}  // namespace

TEST(IntegratedGradients, CompletenessOnSmoothMlp) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Model m = smooth_mlp(rng, 6);
    const Tensor x = test::random_tensor({6}, rng);
    const double delta = oracle::forward(m, x.values())[0] - oracle::forward(m, std::vector<double>(6, 0.0))[0];
    const ImportanceEstimate e = estimate_ig(m, x, {0}, IGConfig{25, {}});
    double sum = 0.0;
    for (double v : e.scores.values()) sum += v;
    EXPECT_NEAR(sum, delta, 0.01 * std::abs(delta) + 1e-12);
  }
}

TEST(IntegratedGradients, ReluCompletenessImprovesWithSteps) {
  // Kinks make the Riemann sum inexact; the error shrinks roughly as 1/k.
  Rng rng(7);
  double err25 = 0.0;
  double err2000 = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Model m = Model::mlp(6, {8}, 1, rng);
    const Tensor x = test::random_tensor({6}, rng);
    const double delta = oracle::forward(m, x.values())[0] - oracle::forward(m, std::vector<double>(6, 0.0))[0];
    for (auto [k, err] : {std::pair{25u, &err25}, std::pair{2000u, &err2000}}) {
      const Tensor scores = estimate_ig(m, x, {0}, IGConfig{k, {}}).scores;
      double sum = 0.0;
      for (double v : scores.values()) sum += v;
      *err += std::abs(sum - delta);
    }
  }
  EXPECT_LT(err2000, err25 / 20.0);
}

TEST(IntegratedGradients, ReferenceShapeMismatchThrows) {
  Rng rng(8);
  const Model m = Model::mlp(4, {}, 1, rng);
  EXPECT_THROW(estimate_ig(m, Tensor::from({1, 2, 3, 4}), {0}, IGConfig{5, Tensor::from({1, 2})}), DimensionError);
}

TEST(Ensemble, ZeroNoiseDegeneratesExactly) {
  Rng rng(9);
  const Model m = Model::mlp(5, {6}, 2, rng);
  const Tensor x = test::random_tensor({5}, rng);
  for (BaseMethod base : {BaseMethod::Gradient, BaseMethod::IntegratedGradients, BaseMethod::GuidedBackprop}) {
    for (std::size_t j : {1u, 15u}) {
      const EnsembleConfig cfg{j, 0.0, 3};
      const Tensor b = estimate_base(base, m, x, {1}).scores;
      EXPECT_EQ(ensemble(base, EnsembleMode::SmoothGrad, m, x, {1}, cfg).scores, b);
      const Tensor sq = ensemble(base, EnsembleMode::SmoothGradSquared, m, x, {1}, cfg).scores;
      const Tensor var = ensemble(base, EnsembleMode::VarGrad, m, x, {1}, cfg).scores;
      for (std::size_t i = 0; i < b.size(); ++i) {
        EXPECT_EQ(sq[i], b[i] * b[i]);
        EXPECT_EQ(var[i], 0.0);
      }
    }
  }
}

TEST(Ensemble, VarianceDecomposition) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const Model m = Model::mlp(6, {10}, 3, rng);
    const Tensor x = test::random_tensor({6}, rng);
    const EnsembleConfig cfg{15, 0.3, static_cast<std::uint64_t>(trial)};
    for (BaseMethod base : {BaseMethod::Gradient, BaseMethod::IntegratedGradients, BaseMethod::GuidedBackprop}) {
      const Tensor sg = ensemble(base, EnsembleMode::SmoothGrad, m, x, {2}, cfg).scores;
      const Tensor sq = ensemble(base, EnsembleMode::SmoothGradSquared, m, x, {2}, cfg).scores;
      const Tensor var = ensemble(base, EnsembleMode::VarGrad, m, x, {2}, cfg).scores;
      for (std::size_t i = 0; i < sg.size(); ++i) EXPECT_NEAR(var[i], sq[i] - sg[i] * sg[i], 1e-10);
    }
  }
}

TEST(Ensemble, LinearModelSmoothGradIsGrad) {
  Rng rng(11);
  const Model m = single_affine(rng, 8, 2);
  const Tensor x = test::random_tensor({8}, rng);
  const EnsembleConfig cfg{15, 1.0, 4};
  const Tensor g = estimate_grad(m, x, {0}).scores;
  const Tensor sg = ensemble(BaseMethod::Gradient, EnsembleMode::SmoothGrad, m, x, {0}, cfg).scores;
  const Tensor var = ensemble(BaseMethod::Gradient, EnsembleMode::VarGrad, m, x, {0}, cfg).scores;
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_NEAR(sg[i], g[i], 1e-12);
    EXPECT_NEAR(var[i], 0.0, 1e-10);
  }
}

TEST(Ensemble, SeededAndIds) {
  Rng rng(12);
  const Model m = Model::mlp(4, {4}, 2, rng);
  const Tensor x = test::random_tensor({4}, rng);
  const EnsembleConfig cfg{5, 0.5, 99};
  const auto a = ensemble(BaseMethod::GuidedBackprop, EnsembleMode::VarGrad, m, x, {0}, cfg);
  const auto b = ensemble(BaseMethod::GuidedBackprop, EnsembleMode::VarGrad, m, x, {0}, cfg);
  EXPECT_EQ(a.scores, b.scores);
  EXPECT_EQ(a.estimator_id, "var-gb");
  EXPECT_EQ(ensemble(BaseMethod::IntegratedGradients, EnsembleMode::SmoothGradSquared, m, x, {0}, cfg).estimator_id,
            "sg-sq-ig");
}

TEST(Square, Examples) {
  const ImportanceEstimate e{Tensor::from({-2.0, 3.0}), "grad"};
  const ImportanceEstimate sq = square_estimate(e);
  EXPECT_EQ(sq.scores.values(), (std::vector<double>{4.0, 9.0}));
  EXPECT_EQ(sq.estimator_id, "sq-grad");
  EXPECT_EQ(square_estimate({Tensor({3}), "ig"}).scores, Tensor({3}));
}

TEST(Square, RankingEqualsAbsoluteValueRanking) {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor s = test::random_tensor({30}, rng);
    // Force some exact ties in magnitude.
    s[3] = -s[7];
    s[11] = s[12];
    Tensor abs_s = s;
    for (double& v : abs_s.data()) v = std::abs(v);
    EXPECT_EQ(rank_scores(square_estimate({s, "grad"}).scores.data()), rank_scores(abs_s.data()));
  }
}

TEST(RandomControl, DeterministicAndInputIndependent) {
  const ImportanceEstimate a = control_random({4, 4, 3}, 17);
  EXPECT_EQ(a.scores.shape(), (Shape{4, 4, 3}));
  EXPECT_EQ(a.scores, control_random({4, 4, 3}, 17).scores);
  EXPECT_NE(a.scores, control_random({4, 4, 3}, 18).scores);
  for (double v : a.scores.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  // Through the dispatcher two different inputs with one seed agree.
  Rng rng(1);
  const Model m = Model::mlp(4, {}, 1, rng);
  const EstimatorSpec spec = EstimatorSpec::parse("random");
  EXPECT_EQ(compute_estimate(spec, m, Tensor::from({1, 2, 3, 4}), {0}, {}, std::nullopt, 5).scores,
            compute_estimate(spec, m, Tensor::from({9, 9, 9, 9}), {0}, {}, std::nullopt, 5).scores);
}

TEST(RandomControl, TopSubsetsAreUniform) {
  // Exact subset frequencies for N = 6, k = 2 (15 subsets), 10^4 draws.
  const std::size_t n = 6;
  const std::size_t k = top_count(1.0 / 3.0, n);
  ASSERT_EQ(k, 2u);
  std::map<std::pair<std::size_t, std::size_t>, double> subsets;
  std::vector<double> per_index(n, 0.0);
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) {
    const Ranking r = rank_features(control_random({n}, SeedSequence(2024).add(d).seed()), Granularity::Feature);
    const auto lo = std::min(r.order[0], r.order[1]);
    const auto hi = std::max(r.order[0], r.order[1]);
    subsets[{lo, hi}] += 1.0;
    per_index[r.order[0]] += 1.0;
    per_index[r.order[1]] += 1.0;
  }
  ASSERT_EQ(subsets.size(), 15u);
  std::vector<double> counts;
  for (const auto& [key, c] : subsets) counts.push_back(c);
  EXPECT_GT(chi2_p_value(counts, draws / 15.0), 0.01);
  EXPECT_GT(chi2_p_value(per_index, draws * 2.0 / n), 0.01);
}

TEST(Sobel, ConstantImageIsZero) {
  const ImageShape shape{5, 7, 3};
  const ImportanceEstimate e = control_sobel(Tensor(shape.sample_shape(), 0.42), shape);
  for (double v : e.scores.values()) EXPECT_EQ(v, 0.0);
}

TEST(Sobel, VerticalStepEdge) {
  const ImageShape shape{5, 6, 1};
  Tensor img(shape.sample_shape());
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 3; c < 6; ++c) img[r * 6 + c] = 1.0;
  }
  const ImportanceEstimate e = control_sobel(img, shape);
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 6; ++c) {
      const double expected = (c == 2 || c == 3) ? 4.0 : 0.0;
      EXPECT_DOUBLE_EQ(e.scores[r * 6 + c], expected) << r << "," << c;
    }
  }
}

TEST(Sobel, BroadcastsAcrossChannelsAndNeedsMetadata) {
  const ImageShape shape{4, 4, 3};
  Rng rng(14);
  const Tensor img = test::random_tensor(shape.sample_shape(), rng);
  const ImportanceEstimate e = control_sobel(img, shape);
  for (std::size_t p = 0; p < 16; ++p) {
    EXPECT_EQ(e.scores[p * 3], e.scores[p * 3 + 1]);
    EXPECT_EQ(e.scores[p * 3], e.scores[p * 3 + 2]);
  }
  EXPECT_THROW(control_sobel(img, std::nullopt), MetadataError);
}

TEST(EstimatorSpec, ParseRoundTrip) {
  for (const char* id : {"grad", "ig", "gb", "sg-grad", "sg-sq-ig", "var-gb", "sq-grad", "sq-ig", "random", "sobel"}) {
    EXPECT_EQ(EstimatorSpec::parse(id).id(), id);
  }
  EXPECT_THROW(EstimatorSpec::parse("lrp"), Error);
  EXPECT_THROW(EstimatorSpec::parse("sg-"), Error);
  EXPECT_FALSE(EstimatorSpec::parse("sobel").uses_model());
  EXPECT_TRUE(EstimatorSpec::parse("var-ig").uses_model());
}

TEST(Estimators, ControlsIgnoreModelParameters) {
  Rng rng(15);
  const ImageShape shape{3, 3, 1};
  const Tensor img = test::random_tensor(shape.sample_shape(), rng);
  const Model a = Model::mlp(9, {4}, 2, rng);
  const Model b = Model::mlp(9, {4}, 2, rng);
  for (const char* id : {"random", "sobel"}) {
    const EstimatorSpec spec = EstimatorSpec::parse(id);
    EXPECT_EQ(compute_estimate(spec, a, img, {0}, {}, shape, 3).scores,
              compute_estimate(spec, b, img, {1}, {}, shape, 3).scores);
  }
}

TEST(Estimators, OutputsMatchSampleShapeAndAreFinite) {
  Rng rng(16);
  const ImageShape shape{3, 4, 2};
  const Model m = Model::mlp(shape.size(), {10}, 3, rng);
  const Tensor x = test::random_tensor(shape.sample_shape(), rng);
  EstimatorSettings settings;
  settings.noise_stddev = 0.2;
  settings.ensemble_samples = 4;
  settings.ig.steps = 5;
  for (const char* id : {"grad", "ig", "gb", "sg-grad", "sg-sq-gb", "var-ig", "sq-ig", "random", "sobel"}) {
    const ImportanceEstimate e = compute_estimate(EstimatorSpec::parse(id), m, x, {2}, settings, shape, 7);
    EXPECT_EQ(e.scores.shape(), x.shape()) << id;
    EXPECT_TRUE(e.scores.all_finite()) << id;
    EXPECT_EQ(e.estimator_id, id);
  }
}
