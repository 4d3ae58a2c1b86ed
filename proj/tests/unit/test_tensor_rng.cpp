#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include "roar/errors.hpp"
#include "roar/rng.hpp"
#include "roar/tensor.hpp"

using namespace roar;

TEST(Tensor, ShapeMatchesDataLength) {
  const Tensor t({2, 3, 4}, 1.5);
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_EQ(shape_size(t.shape()), t.size());
  EXPECT_TRUE(std::all_of(t.values().begin(), t.values().end(), [](double v) { return v == 1.5; }));
}

TEST(Tensor, MismatchedDataThrows) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor::from({1, 2, 3}).reshaped({2, 2}), DimensionError);
}

TEST(Tensor, RowsAndSlices) {
  Tensor t({2, 3}, std::vector<double>{0, 1, 2, 3, 4, 5});
  EXPECT_EQ(t.at(1, 2), 5.0);
  auto r = t.row(1);
  ASSERT_EQ(r.size(), 3u);
  r[0] = -1.0;
  EXPECT_EQ(t.at(1, 0), -1.0);
  const Tensor s = t.slice(0);
  EXPECT_EQ(s.shape(), Shape{3});
  EXPECT_EQ(s.values(), (std::vector<double>{0, 1, 2}));
  EXPECT_THROW(t.slice(2), DimensionError);
}

TEST(Tensor, FiniteCheck) {
  Tensor t = Tensor::from({1.0, 2.0});
  EXPECT_TRUE(t.all_finite());
  EXPECT_NO_THROW(t.require_finite("ok"));
  t[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(t.require_finite("nan"), Error);
  t[1] = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(t.all_finite());
}

TEST(Rng, EngineMatchesStandardSequence) {
  // The standard fixes the 10000th output of a default-seeded mt19937_64.
  Rng rng(5489u);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next_u64();
  EXPECT_EQ(v, 9981545732273789042ULL);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.normal();
    EXPECT_EQ(x, b.normal());
    differs |= x != c.normal();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformMoments) {
  Rng rng(7);
  const int n = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sum_sq += u * u;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
  EXPECT_NEAR(sum_sq / n - mean * mean, 1.0 / 12.0, 0.002);
}

TEST(Rng, NormalMoments) {
  Rng rng(11);
  const int n = 200000;
  double sum = 0.0, sum_sq = 0.0, sum_4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum_sq += z * z;
    sum_4 += z * z * z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(sum_sq / n, 1.0, 0.02);
  EXPECT_NEAR(sum_4 / n, 3.0, 0.1);
}

TEST(Rng, UniformIndexIsUniform) {
  Rng rng(3);
  const std::size_t k = 7;
  const int n = 70000;
  std::vector<double> counts(k, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto v = rng.uniform_index(k);
    ASSERT_LT(v, k);
    counts[v] += 1.0;
  }
  double chi2 = 0.0;
  const double expected = static_cast<double>(n) / k;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  const boost::math::chi_squared dist(static_cast<double>(k - 1));
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 0.01);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng rng(5);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  rng.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_FALSE(std::is_sorted(v.begin(), v.end()));
}

TEST(SeedSequence, DistinctInputsGiveDistinctSeeds) {
  std::set<std::uint64_t> seeds;
  for (std::uint64_t base = 0; base < 4; ++base) {
    for (const char* id : {"grad", "ig", "random"}) {
      for (double t : {0.0, 0.1, 0.3}) {
        for (int run = 0; run < 5; ++run) seeds.insert(SeedSequence(base).add(id).add(t).add(run).seed());
      }
    }
  }
  EXPECT_EQ(seeds.size(), 4u * 3u * 3u * 5u);
  EXPECT_EQ(SeedSequence(9).add("x").add(1).seed(), SeedSequence(9).add("x").add(1).seed());
  EXPECT_NE(SeedSequence(9).add("x").add(1).seed(), SeedSequence(9).add(1).add("x").seed());
}

TEST(Fnv, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}
