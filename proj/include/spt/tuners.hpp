// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "spt/autodiff.hpp"
#include "spt/mask.hpp"
#include "spt/random.hpp"
#include "spt/tensor_map.hpp"

namespace spt {

enum class ModuleKind { lora, adapter };
enum class Activation { relu, gelu };

const char* to_string(ModuleKind kind) noexcept;

/// Trainable module attached to one frozen weight matrix W [d_in x d_out].
///
/// LoRA:    W is used as W + down * up, with down [d_in x r] and up [r x d_out].
/// Adapter: the matrix output h (after its bias) becomes
///          h + act(h * down + down_bias) * up + up_bias,
///          with down [d_out x r] and up [r x d_out].
///
/// `up` (and the adapter biases) start at zero, so a fresh module leaves the
/// forward pass unchanged.
struct TuneModule {
  std::string target;
  ModuleKind kind = ModuleKind::lora;
  std::size_t rank = 0;
  Tensor down;
  Tensor up;
  Tensor down_bias;
  Tensor up_bias;
  Activation activation = Activation::relu;

  std::size_t parameter_count() const;
};

/// Largest rank a module on a d_in x d_out matrix may use: min(d_in, d_out) / 2.
std::size_t max_module_rank(std::size_t d_in, std::size_t d_out);

TuneModule make_lora(std::string target, std::size_t d_in, std::size_t d_out, std::size_t rank, Rng& rng);
TuneModule make_adapter(std::string target, std::size_t d_in, std::size_t d_out, std::size_t rank, Rng& rng,
                        Activation activation = Activation::relu);

/// A module's tensors recorded on a tape.
struct ModuleVars {
  Var down;
  Var up;
  Var down_bias;
  Var up_bias;
};

ModuleVars bind_module(Tape& tape, const TuneModule& module, bool requires_grad);

/// x * W + (x * down) * up, never forming W + down * up.
Var lora_linear(Tape& tape, Var x, Var weight, const ModuleVars& vars);
/// h + act(h * down + down_bias) * up + up_bias.
Var adapter_residual(Tape& tape, Var h, const ModuleVars& vars, Activation activation);

/// Tape-free evaluations of the same functions.
Tensor lora_forward(const Tensor& weight, const Tensor& x, const TuneModule& module);
Tensor adapter_forward(const Tensor& h, const TuneModule& module);

/// W + down * up. Throws ContractError for adapters.
Tensor merge_lora(const Tensor& weight, const TuneModule& module);

/// Folds every LoRA module into its target weight and drops it from `modules`.
/// Adapters are left in place.
void merge_all_lora(ParameterStore& params, std::vector<TuneModule>& modules);

/// Modules as "module.{target}.{field}" entries for a checkpoint.
void store_modules(const std::vector<TuneModule>& modules, TensorMap& out);
/// Recovers modules from "module.*" entries; other entries are ignored.
std::vector<TuneModule> load_modules(const TensorMap& tensors);

// -- optimizer rules -------------------------------------------------------

struct AdamWConfig {
  float beta1 = 0.9F;
  float beta2 = 0.999F;
  float eps = 1e-8F;
  float weight_decay = 1e-4F;
};

/// First and second moments for one parameter tensor.
struct AdamWState {
  Tensor m;
  Tensor v;
  std::uint64_t step = 0;

  explicit AdamWState(const Shape& shape) : m(shape), v(shape) {}
};

/// W <- W - lr * g, dense.
void apply_update(Tensor& weight, const Tensor& grad, float lr);
/// W <- W - lr * (g (.) M); masked-out entries are untouched.
void apply_masked_update(Tensor& weight, const Tensor& grad, const Mask& mask, float lr);

/// One AdamW step (decoupled weight decay, bias-corrected moments).
void apply_update(Tensor& weight, const Tensor& grad, AdamWState& state, const AdamWConfig& cfg, float lr);
/// AdamW restricted to mask=1 entries. Moments of masked-out entries stay
/// zero and their weights are bit-identical afterwards, so the masked tensor
/// follows exactly the trajectory its selected scalars would follow if
/// trained as standalone parameters.
void apply_masked_update(Tensor& weight, const Tensor& grad, const Mask& mask, AdamWState& state,
                         const AdamWConfig& cfg, float lr);

}  // namespace spt
