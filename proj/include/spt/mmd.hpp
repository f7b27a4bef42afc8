// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "spt/tensor.hpp"

namespace spt {

struct DomainGapReport {
  double mmd = 0.0;  // unbiased MMD^2, clamped at 0
  double bandwidth = 0.0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
};

/// Unbiased MMD^2 between the rows of a [n x f] and b [m x f] under an RBF
/// kernel exp(-|x - y|^2 / (2 h^2)). h is the median pairwise distance over
/// the pooled rows (1 if every row coincides). Accumulated in double.
/// Throws ArgumentError for fewer than 2 rows per side, DimensionError when
/// feature widths differ.
DomainGapReport compute_mmd(const Tensor& a, const Tensor& b);

}  // namespace spt
