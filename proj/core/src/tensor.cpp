#include "roar/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "roar/errors.hpp"

namespace roar {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  return fmt::format("({})", fmt::join(shape, ", "));
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError(fmt::format("tensor shape {} holds {} elements but {} were given",
                                     shape_string(shape_), shape_size(shape_), data_.size()));
  }
}

Tensor Tensor::from(std::initializer_list<double> values) {
  return from(std::vector<double>(values));
}

Tensor Tensor::from(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

std::size_t Tensor::row_size() const {
  if (shape_.empty() || shape_[0] == 0) return 0;
  return data_.size() / shape_[0];
}

std::span<double> Tensor::row(std::size_t i) {
  const std::size_t n = row_size();
  return std::span<double>(data_).subspan(i * n, n);
}

std::span<const double> Tensor::row(std::size_t i) const {
  const std::size_t n = row_size();
  return std::span<const double>(data_).subspan(i * n, n);
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice(std::size_t i) const {
  if (rank() < 2 || i >= shape_[0]) {
    throw DimensionError(fmt::format("cannot take slice {} of tensor {}", i, shape_string(shape_)));
  }
  auto r = row(i);
  return Tensor(Shape(shape_.begin() + 1, shape_.end()), std::vector<double>(r.begin(), r.end()));
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::require_finite(const std::string& context) const {
  if (!all_finite()) throw Error(context + ": non-finite value in tensor");
}

}  // namespace roar
