// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spt/autodiff.hpp"
#include "spt/tensor_map.hpp"
#include "spt/tuners.hpp"

namespace spt {

enum class Variant { transformer, mlp };

/// Desk-scale backbone shape.
///
/// transformer: embed [input_dim x width], then `depth` pre-norm blocks
///   (attention with q/k/v/o, MLP fc1/fc2 with GELU), mean pooling over the
///   sequence, linear head.
/// mlp: the sequence is flattened, then `depth` blocks of
///   gelu(fc2(gelu(fc1(h)))), linear head.
struct ModelConfig {
  Variant variant = Variant::transformer;
  std::size_t depth = 2;
  std::size_t width = 16;
  std::size_t heads = 2;
  std::size_t mlp_ratio = 2;
  std::size_t num_classes = 4;
  std::size_t seq = 4;
  std::size_t input_dim = 16;

  /// Throws ConfigError.
  void validate() const;
  std::size_t hidden() const { return width * mlp_ratio; }
};

const char* to_string(Variant v) noexcept;
Variant parse_variant(std::string_view text);

/// Deterministic initialization: truncated normal (std 0.02) for matrices,
/// zeros for biases, ones for layer-norm scales.
ParameterStore build_model(const ModelConfig& config, std::uint64_t seed);

// Registry naming helpers.

/// The roles the pattern reports break down: q, k, v, o, fc1, fc2.
inline constexpr std::string_view kMatrixRoles[] = {"q", "k", "v", "o", "fc1", "fc2"};

/// "block{i}.{role}..." -> i.
std::optional<std::size_t> block_index(std::string_view name);
/// "block{i}.{role}" -> role for weight matrices (no suffix), empty otherwise.
std::string_view matrix_role(std::string_view name);
bool is_head(std::string_view name);
bool is_bias(std::string_view name);
/// A 2-D block weight matrix that may host a LoRA/Adapter module.
bool is_structured_eligible(std::string_view name, const Shape& shape);

/// Which leaves are recorded with requires_grad.
struct GradPolicy {
  std::vector<bool> params;  // aligned with ParameterStore order; empty = none
  bool modules = false;

  static GradPolicy none() { return {}; }
  static GradPolicy all_params(const ParameterStore& store) { return {std::vector<bool>(store.size(), true), false}; }
};

struct ForwardGraph {
  Var logits;
  std::vector<Var> params;         // aligned with ParameterStore order
  std::vector<ModuleVars> modules;  // aligned with the modules argument
};

/// Records the forward pass on `tape`. `batch` is [n x seq x input_dim].
/// Each module must target an existing structured-eligible matrix (ConfigError
/// otherwise), at most one module per matrix.
ForwardGraph forward(Tape& tape, const ModelConfig& config, const ParameterStore& params, const Tensor& batch,
                     std::span<const TuneModule> modules, const GradPolicy& policy);

/// Logits [n x classes] without recording gradients.
Tensor forward(const ModelConfig& config, const ParameterStore& params, const Tensor& batch,
               std::span<const TuneModule> modules = {});

/// Creates a module for `target` with the shape that matrix requires.
TuneModule make_module(const ParameterStore& params, const std::string& target, ModuleKind kind, std::size_t rank,
                       Rng& rng, Activation activation = Activation::relu);

}  // namespace spt
