#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace roar {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with shape metadata.
///
/// The element count always equals the product of the shape. A default
/// constructed tensor has shape {0} and no data.
class Tensor {
 public:
  Tensor() : shape_{0} {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  /// Rank-1 tensor holding `values`.
  static Tensor from(std::initializer_list<double> values);
  static Tensor from(std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 2-D accessors; the tensor must be rank 2.
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  /// Contiguous slice for index `i` along the leading axis.
  std::span<double> row(std::size_t i);
  std::span<const double> row(std::size_t i) const;
  /// Number of elements in one leading-axis slice.
  std::size_t row_size() const;

  Tensor reshaped(Shape shape) const;
  /// Copy of the leading-axis slice `i` with the leading axis dropped.
  Tensor slice(std::size_t i) const;

  bool all_finite() const noexcept;
  /// Throws roar::Error mentioning `context` if any entry is NaN or infinite.
  void require_finite(const std::string& context) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace roar
