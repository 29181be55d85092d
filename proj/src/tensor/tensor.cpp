#include "fastprio/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <sstream>

#include "fastprio/errors.hpp"

namespace fastprio {

std::size_t shape_size(const Shape& shape) {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) throw DimensionError("tensor rank must be at least 1");
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor dims must be positive, got " + shape_to_string(shape_));
  }
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_to_string(shape_) + " needs " +
                         std::to_string(shape_size(shape_)) + " values, got " +
                         std::to_string(data_.size()));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw NumericError("non-finite tensor value at flat index " + std::to_string(i));
    }
  }
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0f); }

Tensor Tensor::full(Shape shape, float value) {
  auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<float>(n, value));
}

Tensor Tensor::vector(std::initializer_list<float> values) {
  return vector(std::vector<float>(values));
}

Tensor Tensor::vector(std::vector<float> values) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<float> values) {
  return Tensor({rows, cols}, std::vector<float>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw IndexError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_to_string(shape_));
  }
  return shape_[axis];
}

float Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw DimensionError("at(row, col) needs a rank-2 tensor");
  if (row >= shape_[0] || col >= shape_[1]) throw IndexError("matrix index out of range");
  return data_[row * shape_[1] + col];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " +
                         shape_to_string(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = data_;
  return t;
}

std::span<const float> Tensor::item_values(std::size_t i) const {
  if (rank() < 2) throw DimensionError("item() needs rank >= 2, got " + shape_to_string(shape_));
  if (i >= shape_[0]) {
    throw IndexError("item " + std::to_string(i) + " out of range for leading dim " +
                     std::to_string(shape_[0]));
  }
  const std::size_t stride = data_.size() / shape_[0];
  return std::span<const float>(data_).subspan(i * stride, stride);
}

Tensor Tensor::item(std::size_t i) const {
  auto v = item_values(i);
  Tensor t;
  t.shape_.assign(shape_.begin() + 1, shape_.end());
  t.data_.assign(v.begin(), v.end());
  return t;
}

Tensor Tensor::gather(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw EmptyInputError("gather() with no indices");
  if (rank() < 2) throw DimensionError("gather() needs rank >= 2");
  const std::size_t stride = data_.size() / shape_[0];
  std::vector<float> out;
  out.reserve(indices.size() * stride);
  for (auto i : indices) {
    auto v = item_values(i);
    out.insert(out.end(), v.begin(), v.end());
  }
  Tensor t;
  t.shape_ = shape_;
  t.shape_[0] = indices.size();
  t.data_ = std::move(out);
  return t;
}

bool Tensor::bit_equal(const Tensor& other) const noexcept {
  if (shape_ != other.shape_ || data_.size() != other.data_.size()) return false;
  return std::equal(data_.begin(), data_.end(), other.data_.begin(), [](float a, float b) {
    return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b);
  });
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw EmptyInputError("stack() of zero tensors");
  const Shape& inner = items.front().shape();
  std::vector<float> out;
  out.reserve(items.size() * items.front().size());
  for (const auto& t : items) {
    if (t.shape() != inner) {
      throw DimensionError("stack(): shape " + shape_to_string(t.shape()) + " differs from " +
                           shape_to_string(inner));
    }
    out.insert(out.end(), t.storage().begin(), t.storage().end());
  }
  Shape s{items.size()};
  s.insert(s.end(), inner.begin(), inner.end());
  return Tensor(std::move(s), std::move(out));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> acc(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) acc[i * n + j] += aip * bv[p * n + j];
    }
  }
  return Tensor({m, n}, std::vector<float>(acc.begin(), acc.end()));
}

Tensor elementwise_mul(const Tensor& a, const Tensor& m) {
  const auto av = a.values();
  const auto mv = m.values();
  std::vector<float> out(av.size());
  if (a.shape() == m.shape()) {
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * mv[i];
    return Tensor(a.shape(), std::move(out));
  }
  if (a.rank() == 3 && m.rank() == 1 && m.dim(0) == a.dim(0)) {
    const std::size_t plane = a.dim(1) * a.dim(2);
    for (std::size_t c = 0; c < a.dim(0); ++c) {
      for (std::size_t j = 0; j < plane; ++j) out[c * plane + j] = av[c * plane + j] * mv[c];
    }
    return Tensor(a.shape(), std::move(out));
  }
  throw DimensionError("cannot broadcast " + shape_to_string(m.shape()) + " onto " +
                       shape_to_string(a.shape()));
}

std::size_t argmax(std::span<const float> v) {
  if (v.empty()) throw EmptyInputError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

std::size_t argmax(const Tensor& v) {
  if (v.rank() > 1) throw DimensionError("argmax needs a rank-1 tensor");
  return argmax(v.values());
}

std::size_t round_count(double x) {
  if (x < 0) throw ParameterError("negative count");
  return static_cast<std::size_t>(std::llround(x));
}

}  // namespace fastprio
