#include <cmath>
#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "roar/dataset_io.hpp"
#include "roar/errors.hpp"
#include "roar/rng.hpp"
#include "test_util.hpp"

using namespace roar;
namespace fs = std::filesystem;

namespace {

void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> be32(std::uint32_t v) {
  return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
}

std::vector<unsigned char> idx_file(std::uint32_t magic, std::vector<std::uint32_t> dims, std::size_t payload) {
  std::vector<unsigned char> out = be32(magic);
  for (std::uint32_t d : dims) {
    auto b = be32(d);
    out.insert(out.end(), b.begin(), b.end());
  }
  for (std::size_t i = 0; i < payload; ++i) out.push_back(static_cast<unsigned char>(i % 256));
  return out;
}

}  // namespace

TEST(Idx, HeaderArithmetic) {
  test::TempDir dir("idx");
  const std::size_t bytes = 10 * 28 * 28;
  EXPECT_EQ(bytes, 7840u);
  write_bytes(dir.path() / "img", idx_file(0x803, {10, 28, 28}, bytes));
  write_bytes(dir.path() / "lbl", idx_file(0x801, {10}, 10));
  const IdxSplit s = load_idx(dir.path() / "img", dir.path() / "lbl");
  EXPECT_EQ(s.shape, (ImageShape{28, 28, 1}));
  EXPECT_EQ(s.data.features.shape(), (Shape{10, 784}));
  EXPECT_EQ(s.data.size(), 10u);
  EXPECT_EQ(s.data.features[5], 5.0 / 255.0);
  EXPECT_EQ(s.data.labels[9], 9u);
  EXPECT_EQ(s.num_classes, 10u);
}

TEST(Idx, FourDimensionalImages) {
  test::TempDir dir("idx");
  write_bytes(dir.path() / "img", idx_file(0x804, {2, 3, 4, 3}, 72));
  write_bytes(dir.path() / "lbl", idx_file(0x801, {2}, 2));
  const IdxSplit s = load_idx(dir.path() / "img", dir.path() / "lbl");
  EXPECT_EQ(s.shape, (ImageShape{3, 4, 3}));
}

TEST(Idx, BadMagicIsFormatError) {
  test::TempDir dir("idx");
  write_bytes(dir.path() / "img", idx_file(0x802, {1, 2, 2}, 4));
  write_bytes(dir.path() / "lbl", idx_file(0x801, {1}, 1));
  EXPECT_THROW(load_idx(dir.path() / "img", dir.path() / "lbl"), FormatError);
  EXPECT_THROW(load_idx(dir.path() / "missing", dir.path() / "lbl"), FormatError);
}

TEST(Idx, TruncationReportsExpectedAndActual) {
  test::TempDir dir("idx");
  write_bytes(dir.path() / "img", idx_file(0x803, {10, 28, 28}, 7000));
  write_bytes(dir.path() / "lbl", idx_file(0x801, {10}, 10));
  try {
    load_idx(dir.path() / "img", dir.path() / "lbl");
    FAIL() << "expected LengthError";
  } catch (const LengthError& e) {
    EXPECT_EQ(e.expected(), 7840u);
    EXPECT_EQ(e.actual(), 7000u);
  }
  write_bytes(dir.path() / "short", {0, 0, 8});
  EXPECT_THROW(load_idx(dir.path() / "short", dir.path() / "lbl"), LengthError);
}

TEST(Idx, LabelCountMismatch) {
  test::TempDir dir("idx");
  write_bytes(dir.path() / "img", idx_file(0x803, {3, 2, 2}, 12));
  write_bytes(dir.path() / "lbl", idx_file(0x801, {2}, 2));
  EXPECT_THROW(load_idx(dir.path() / "img", dir.path() / "lbl"), DimensionError);
}

TEST(Idx, SaveLoadRoundTripIsExact) {
  test::TempDir dir("idx");
  Rng rng(1);
  const ImageShape shape{4, 5, 2};
  SplitDataset d;
  for (Dataset* split : {&d.train, &d.test}) {
    const std::size_t n = split == &d.train ? 7 : 3;
    split->features = Tensor({n, shape.size()});
    for (double& v : split->features.data()) v = static_cast<double>(rng.uniform_index(256)) / 255.0;
    split->labels.resize(n);
    for (auto& l : split->labels) l = static_cast<std::uint32_t>(rng.uniform_index(3));
  }
  d.num_classes = 3;
  d.image = shape;
  d.normalization = {{0.0, 0.0}, {255.0, 255.0}};
  save_idx_dataset(d, dir.path());
  const SplitDataset back = load_idx_dataset(dir.path() / "train-images.idx", dir.path() / "train-labels.idx",
                                             dir.path() / "test-images.idx", dir.path() / "test-labels.idx");
  EXPECT_EQ(back.train, d.train);
  EXPECT_EQ(back.test, d.test);
  EXPECT_EQ(back.image, d.image);
}

TEST(Idx, WriteRejectsNonBytes) {
  test::TempDir dir("idx");
  EXPECT_THROW(write_idx_images(dir.path() / "x", Tensor({1, 4}, std::vector<double>{0, 1, 2, 256}), {2, 2, 1}),
               FormatError);
  EXPECT_THROW(write_idx_images(dir.path() / "x", Tensor({1, 4}, std::vector<double>{0, 1, 2, 0.5}), {2, 2, 1}),
               FormatError);
  EXPECT_THROW(write_idx_labels(dir.path() / "y", {300}), FormatError);
}

TEST(Idx, VendoredDigits) {
  const fs::path dir = fs::path(ROAR_TEST_DATA_DIR) / "digits";
  const SplitDataset d = load_idx_dataset(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte",
                                          dir / "test-images-idx3-ubyte", dir / "test-labels-idx1-ubyte");
  EXPECT_EQ(d.train.size(), 1297u);
  EXPECT_EQ(d.test.size(), 500u);
  EXPECT_EQ(d.image, (ImageShape{8, 8, 1}));
  EXPECT_EQ(d.num_classes, 10u);
  for (double v : d.train.features.data()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(ChannelMeans, SimpleCases) {
  SplitDataset d;
  d.image = ImageShape{2, 2, 1};
  d.train = Dataset{Tensor({3, 4}), {0, 1, 0}};
  d.test = Dataset{Tensor({1, 4}, 9.0), {0}};
  EXPECT_EQ(channel_means(d), (std::vector<double>{0.0}));
  d.train.features = Tensor({3, 4}, 0.5);
  EXPECT_EQ(channel_means(d), (std::vector<double>{0.5}));
  d.train = Dataset{Tensor({0, 4}), {}};
  EXPECT_THROW(channel_means(d), Error);
}

TEST(ChannelMeans, MatchesTwoPassOracle) {
  Rng rng(2);
  const ImageShape shape{5, 4, 3};
  SplitDataset d;
  d.image = shape;
  d.train = Dataset{test::random_tensor({50, shape.size()}, rng, 3.0), std::vector<std::uint32_t>(50)};
  d.test = Dataset{test::random_tensor({5, shape.size()}, rng), std::vector<std::uint32_t>(5)};
  for (double& v : d.train.features.data()) v += 10.0;
  const std::vector<double> got = channel_means(d);
  ASSERT_EQ(got.size(), 3u);
  for (std::size_t c = 0; c < 3; ++c) {
    // Two-pass: rough mean, then correction from residuals.
    std::vector<double> vals;
    for (std::size_t i = c; i < d.train.features.size(); i += 3) vals.push_back(d.train.features[i]);
    const double rough = std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
    double resid = 0.0;
    for (double v : vals) resid += v - rough;
    EXPECT_NEAR(got[c], rough + resid / vals.size(), 1e-12);
  }
}

TEST(ChannelMeans, FeatureDataUsesOneValue) {
  SplitDataset d;
  d.train = Dataset{Tensor({2, 2}, std::vector<double>{1, 2, 3, 4}), {0, 1}};
  d.test = Dataset{Tensor({1, 2}), {0}};
  EXPECT_EQ(channel_means(d), (std::vector<double>{2.5}));
  EXPECT_EQ(feature_means(d.train), (std::vector<double>{2.0, 3.0}));
}

TEST(Normalization, RoundTrip) {
  Rng rng(3);
  const Normalization norm{{0.1, -2.0, 5.0}, {0.3, 7.0, 255.0}};
  const Tensor raw = test::random_tensor({6, 12}, rng, 10.0);
  const Tensor back = denormalize(normalize(raw, norm, 3), norm, 3);
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_NEAR(back[i], raw[i], 1e-12 * (1.0 + std::abs(raw[i])));
  const Tensor stored = normalize(Tensor({1, 3}, std::vector<double>{0.1, -2.0, 5.0}), norm, 3);
  EXPECT_EQ(stored.values(), (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(Bars, ShapesLabelsAndRange) {
  BarsConfig cfg;
  cfg.n_train = 200;
  cfg.n_test = 50;
  cfg.channels = 2;
  const SplitDataset d = generate_bars(cfg);
  EXPECT_NO_THROW(d.validate());
  EXPECT_EQ(d.train.features.shape(), (Shape{200, 12 * 12 * 2}));
  EXPECT_EQ(d.image, (ImageShape{12, 12, 2}));
  std::size_t ones = 0;
  for (auto l : d.train.labels) ones += l;
  EXPECT_GT(ones, 60u);
  EXPECT_LT(ones, 140u);
  for (double v : d.train.features.data()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  EXPECT_EQ(generate_bars(cfg), d);
  cfg.seed = 1;
  EXPECT_NE(generate_bars(cfg).train, d.train);
}

TEST(Bars, NoiselessBarsAreOriented) {
  BarsConfig cfg;
  cfg.n_train = 50;
  cfg.n_test = 1;
  cfg.noise = 0.0;
  const SplitDataset d = generate_bars(cfg);
  for (std::size_t s = 0; s < d.train.size(); ++s) {
    const auto row = d.train.features.row(s);
    std::size_t lit = 0;
    std::size_t full_rows = 0;
    for (std::size_t r = 0; r < 12; ++r) {
      std::size_t in_row = 0;
      for (std::size_t c = 0; c < 12; ++c) in_row += row[r * 12 + c] == 1.0;
      lit += in_row;
      full_rows += in_row == 12;
    }
    EXPECT_EQ(lit, 24u);
    EXPECT_EQ(full_rows, d.train.labels[s] == 0 ? 2u : 0u);
  }
}

TEST(Bars, RejectsBadGeometry) {
  BarsConfig cfg;
  cfg.bar_width = 13;
  EXPECT_THROW(generate_bars(cfg), Error);
  cfg.bar_width = 2;
  cfg.height = 0;
  EXPECT_THROW(generate_bars(cfg), Error);
}
