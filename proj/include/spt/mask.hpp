// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "spt/tensor.hpp"

namespace spt {

/// Binary mask shaped like a weight tensor; 1 marks a trainable connection.
class Mask {
 public:
  Mask() = default;
  explicit Mask(Shape shape);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return bits_.size(); }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool on = true);
  std::size_t popcount() const noexcept { return popcount_; }

  /// 0/1 float tensor, the form stored in the SPTTENS1 sidecar.
  Tensor to_tensor() const;
  /// Throws FormatError on any entry other than 0 or 1.
  static Mask from_tensor(const Tensor& t);

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  Shape shape_;
  std::vector<std::uint8_t> bits_;
  std::size_t popcount_ = 0;
};

}  // namespace spt
