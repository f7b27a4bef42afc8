// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace spt {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major float32 tensor.
///
/// A default-constructed tensor is empty (rank 0, no data). Every other
/// tensor has rank >= 1 and all dimensions >= 1. Scalars are shape {1}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0F);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor scalar(float value);
  static Tensor vector(std::initializer_list<float> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<float>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  /// First dimension; for a matrix, the row count.
  std::size_t rows() const;
  /// Product of all dimensions but the first.
  std::size_t cols() const;

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }
  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }
  float& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  float at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool flag) noexcept { requires_grad_ = flag; }

  /// Same data under a new shape with the same element count.
  Tensor reshaped(Shape shape) const;

  void fill(float value);
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<float> data_;
  bool requires_grad_ = false;
};

/// Shape and bytes are identical (distinguishes -0.0/0.0 and NaN payloads).
bool bit_equal(const Tensor& a, const Tensor& b);

/// Largest |a_i - b_i|; shapes must match.
float max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace spt
