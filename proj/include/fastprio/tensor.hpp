#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fastprio {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major f32 array. Values are immutable after construction and
// always finite; constructing a tensor with NaN/Inf throws NumericError.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor vector(std::initializer_list<float> values);
  static Tensor vector(std::vector<float> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<float> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const float> values() const noexcept { return data_; }
  const std::vector<float>& storage() const noexcept { return data_; }
  float operator[](std::size_t i) const { return data_[i]; }
  float at(std::size_t row, std::size_t col) const;

  Tensor reshaped(Shape shape) const;

  // Slice along the leading axis: rank-(r-1) tensor for item `i`.
  Tensor item(std::size_t i) const;
  std::span<const float> item_values(std::size_t i) const;
  // Gather items along the leading axis.
  Tensor gather(std::span<const std::size_t> indices) const;

  bool bit_equal(const Tensor& other) const noexcept;

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Stack equal-shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);

Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise product. `m` either matches `a` exactly or is a rank-1 tensor
// with one value per channel of a [channels, h, w] tensor.
Tensor elementwise_mul(const Tensor& a, const Tensor& m);

std::size_t argmax(std::span<const float> v);
std::size_t argmax(const Tensor& v);

// Round half away from zero, used wherever a fraction becomes a count.
std::size_t round_count(double x);

}  // namespace fastprio
