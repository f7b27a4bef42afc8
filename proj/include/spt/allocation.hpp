// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "spt/mask.hpp"
#include "spt/sensitivity.hpp"
#include "spt/tuners.hpp"

namespace spt {

/// One selected weight connection: tensor position in the map, flat offset.
struct Connection {
  std::uint32_t tensor = 0;
  std::size_t index = 0;

  friend auto operator<=>(const Connection&, const Connection&) = default;
};

enum class SigmaPolicy {
  module_param_count,  // sigma = trainable scalars of the module
  paper_formula,       // sigma = 2 * d_in * d_out * r, retained for reproduction
};

enum class StructuredKind { none, lora, adapter };

enum class Verdict { frozen, unstructured, structured };

const char* to_string(SigmaPolicy p) noexcept;
const char* to_string(StructuredKind k) noexcept;
const char* to_string(Verdict v) noexcept;
SigmaPolicy parse_sigma_policy(std::string_view text);
StructuredKind parse_structured_kind(std::string_view text);

/// Tensors never counted toward tau: the head, plus biases when asked.
std::set<std::string> default_exclusions(const TensorMap& layout, bool exclude_bias);

/// Number of connections eligible for selection.
std::size_t eligible_count(const SensitivityMap& sens, const std::set<std::string>& exclusions);

/// The tau highest-scoring connections among non-excluded tensors. Ties are
/// broken by tensor name, then flat index, both ascending. The result is
/// sorted by (tensor, index). Throws ArgumentError when tau is 0 or exceeds
/// the eligible count.
std::vector<Connection> select_top_tau(const SensitivityMap& sens, std::size_t tau,
                                       const std::set<std::string>& exclusions);

/// One mask per tensor of `layout`, set at the given connections.
std::map<std::string, Mask> build_masks(const std::vector<Connection>& connections, const TensorMap& layout);

/// Structured-tuning threshold for a d_in x d_out matrix at rank r.
/// module_param_count: LoRA r*(d_in + d_out); Adapter 2*r*d_out + r + d_out.
/// paper_formula: 2 * d_in * d_out * r for either kind.
std::size_t sigma_for(ModuleKind kind, std::size_t d_in, std::size_t d_out, std::size_t r, SigmaPolicy policy);

/// Trainable scalars a module of this kind adds to a d_in x d_out matrix.
std::size_t module_param_count(ModuleKind kind, std::size_t d_in, std::size_t d_out, std::size_t r);

struct PlanOptions {
  StructuredKind structured = StructuredKind::lora;
  std::size_t rank = 8;
  SigmaPolicy sigma_policy = SigmaPolicy::module_param_count;
  bool exclude_bias = false;
  /// When false, matrices below sigma are frozen instead of masked
  /// (the structured-only ablation).
  bool allow_unstructured = true;
};

struct TensorPlan {
  std::string name;
  Shape shape;
  Verdict verdict = Verdict::frozen;
  std::size_t sensitive = 0;  // selected connections inside this tensor
  std::size_t sigma = 0;      // 0 when not structured-eligible
  std::size_t trainable = 0;  // popcount or module parameter count
  ModuleKind kind = ModuleKind::lora;
  std::size_t rank = 0;
  Mask mask;  // set for unstructured verdicts
};

struct AllocationPlan {
  std::size_t budget_tau = 0;
  StructuredKind structured = StructuredKind::none;
  std::size_t rank = 0;
  SigmaPolicy sigma_policy = SigmaPolicy::module_param_count;
  bool exclude_bias = false;
  std::vector<TensorPlan> tensors;            // every tensor outside the head, in registry order
  std::vector<std::string> always_trainable;  // the head
  std::size_t head_params = 0;
  std::vector<std::string> warnings;

  /// Sum of popcounts over unstructured tensors plus module sizes over
  /// structured ones; excludes the head.
  std::size_t total_trainable() const;
  std::size_t count(Verdict v) const;
  const TensorPlan& at(std::string_view name) const;
};

/// Allocates trainable parameters from the top-tau set:
/// - a structured-eligible matrix with at least sigma selected connections
///   gets a module (Structured);
/// - any other tensor with selected connections is masked (Unstructured);
/// - everything else is Frozen.
/// The head is listed in always_trainable and never enters the plan.
AllocationPlan make_plan(const SensitivityMap& sens, std::size_t tau, const PlanOptions& options);

/// Plan from an explicit connection set (used by make_plan and by random-placement baselines).
AllocationPlan plan_from_connections(const TensorMap& layout, const std::vector<Connection>& selected,
                                     std::size_t tau, const PlanOptions& options);

/// tau from "0.005" (fraction of all parameters, clamped to the eligible
/// count) or "120" (absolute count).
std::size_t resolve_budget(std::string_view budget, std::size_t total_params, std::size_t eligible);

/// Throws ConfigError unless every plan entry names a parameter of the same shape.
void check_plan_matches(const AllocationPlan& plan, const TensorMap& params);

/// Plan document (JSON) plus an SPTTENS1 sidecar "{path}.masks" holding
/// "{name}.mask" for each unstructured tensor.
void save_plan(const std::filesystem::path& path, const AllocationPlan& plan);
AllocationPlan load_plan(const std::filesystem::path& path);
std::string plan_to_json(const AllocationPlan& plan);

}  // namespace spt
