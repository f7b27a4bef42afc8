// SPDX-License-Identifier: Apache-2.0

#include "spt/patterns.hpp"

#include <algorithm>

#include "spt/allocation.hpp"
#include "spt/model.hpp"

namespace spt {

PatternReport report_patterns(const SensitivityMap& sens, std::size_t tau, const std::set<std::string>& exclusions) {
  PatternReport r;
  r.tau = tau;
  std::size_t depth = 0;
  for (const auto& [name, t] : sens.scores) {
    if (auto b = block_index(name)) depth = std::max(depth, *b + 1);
  }
  r.block.assign(depth, 0.0);
  r.block_counts.assign(depth, 0);

  for (const Connection& c : select_top_tau(sens, tau, exclusions)) {
    const std::string& name = sens.scores.entry(c.tensor).first;
    if (auto b = block_index(name)) ++r.block_counts[*b];
    const std::string_view role = matrix_role(name);
    for (std::size_t i = 0; i < r.role.size(); ++i) {
      if (role == kMatrixRoles[i]) ++r.role_counts[i];
    }
  }

  std::size_t in_blocks = 0;
  for (auto c : r.block_counts) in_blocks += c;
  for (std::size_t i = 0; i < depth && in_blocks > 0; ++i) {
    r.block[i] = static_cast<double>(r.block_counts[i]) / static_cast<double>(in_blocks);
  }
  std::size_t in_roles = 0;
  for (auto c : r.role_counts) in_roles += c;
  for (std::size_t i = 0; i < r.role.size() && in_roles > 0; ++i) {
    r.role[i] = static_cast<double>(r.role_counts[i]) / static_cast<double>(in_roles);
  }
  return r;
}

}  // namespace spt
