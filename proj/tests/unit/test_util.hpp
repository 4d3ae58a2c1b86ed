#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "roar/model.hpp"
#include "roar/rng.hpp"
#include "roar/tensor.hpp"

namespace roar::test {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor t(shape);
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

inline Model random_mlp(Rng& rng, std::size_t max_width = 32) {
  const std::size_t depth = 2 + rng.uniform_index(2);  // 2 or 3 affine layers
  const std::size_t in = 1 + rng.uniform_index(max_width);
  std::vector<std::size_t> hidden;
  for (std::size_t l = 0; l + 1 < depth; ++l) hidden.push_back(1 + rng.uniform_index(max_width));
  const std::size_t out = 1 + rng.uniform_index(8);
  return Model::mlp(in, hidden, out, rng);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = tag;
    if (info != nullptr) name += std::string("_") + info->test_suite_name() + "_" + info->name();
    path_ = std::filesystem::temp_directory_path() / ("roar_test_" + name);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace roar::test
