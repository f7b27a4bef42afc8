// SPDX-License-Identifier: Apache-2.0

#include "spt/mask.hpp"

#include "spt/error.hpp"

namespace spt {

Mask::Mask(Shape shape) : shape_(std::move(shape)), bits_(element_count(shape_), 0) {}

void Mask::set(std::size_t i, bool on) {
  if (i >= bits_.size()) {
    throw IndexError("mask index " + std::to_string(i) + " outside " + to_string(shape_));
  }
  const bool was = bits_[i] != 0;
  if (was == on) return;
  bits_[i] = on ? 1 : 0;
  if (on) {
    ++popcount_;
  } else {
    --popcount_;
  }
}

Tensor Mask::to_tensor() const {
  Tensor out(shape_);
  for (std::size_t i = 0; i < bits_.size(); ++i) out[i] = bits_[i] != 0 ? 1.0F : 0.0F;
  return out;
}

Mask Mask::from_tensor(const Tensor& t) {
  Mask m(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == 1.0F) {
      m.set(i);
    } else if (t[i] != 0.0F) {
      throw FormatError("mask entry " + std::to_string(i) + " is neither 0 nor 1");
    }
  }
  return m;
}

}  // namespace spt
