// SPDX-License-Identifier: Apache-2.0

#include "spt/random.hpp"

#include <cmath>

namespace spt {

float truncated_normal(Rng& rng, float stddev) {
  std::normal_distribution<float> dist(0.0F, 1.0F);
  for (;;) {
    const float z = dist(rng);
    if (std::fabs(z) <= 2.0F) return z * stddev;
  }
}

void fill_truncated_normal(Tensor& t, Rng& rng, float stddev) {
  for (auto& v : t.values()) v = truncated_normal(rng, stddev);
}

Rng derive_rng(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  return Rng(seq);
}

}  // namespace spt
