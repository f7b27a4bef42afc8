// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

#include "spt/tensor.hpp"

namespace spt {

using Rng = std::mt19937_64;

/// Normal(0, stddev) resampled until it lies within two standard deviations.
float truncated_normal(Rng& rng, float stddev);

void fill_truncated_normal(Tensor& t, Rng& rng, float stddev);

/// Derives an independent stream from a base seed and a salt.
Rng derive_rng(std::uint64_t seed, std::uint64_t salt);

}  // namespace spt
