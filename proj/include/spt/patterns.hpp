// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "spt/sensitivity.hpp"

namespace spt {

/// Where the top-tau connections sit in the network.
struct PatternReport {
  std::size_t tau = 0;
  /// Share of the block-resident selected connections in each block; sums to 1
  /// unless no selected connection lies in a block (then all zero).
  std::vector<double> block;
  /// Share per role in kMatrixRoles order, over selected connections inside
  /// weight matrices only.
  std::array<double, 6> role{};
  std::vector<std::size_t> block_counts;
  std::array<std::size_t, 6> role_counts{};
};

PatternReport report_patterns(const SensitivityMap& sens, std::size_t tau, const std::set<std::string>& exclusions);

}  // namespace spt
