// SPDX-License-Identifier: Apache-2.0

#include "spt/tuners.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "spt/error.hpp"

namespace spt {

namespace {

constexpr float kModuleInitStd = 0.02F;

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(what) + ": shape " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

void check_rank(std::size_t d_in, std::size_t d_out, std::size_t rank) {
  const std::size_t limit = max_module_rank(d_in, d_out);
  if (rank < 1 || rank > limit) {
    throw ArgumentError("module rank " + std::to_string(rank) + " outside [1, " + std::to_string(limit) +
                        "] for a " + std::to_string(d_in) + "x" + std::to_string(d_out) + " matrix");
  }
}

}  // namespace

const char* to_string(ModuleKind kind) noexcept { return kind == ModuleKind::lora ? "lora" : "adapter"; }

std::size_t TuneModule::parameter_count() const {
  return down.size() + up.size() + down_bias.size() + up_bias.size();
}

std::size_t max_module_rank(std::size_t d_in, std::size_t d_out) { return std::min(d_in, d_out) / 2; }

TuneModule make_lora(std::string target, std::size_t d_in, std::size_t d_out, std::size_t rank, Rng& rng) {
  check_rank(d_in, d_out, rank);
  TuneModule m;
  m.target = std::move(target);
  m.kind = ModuleKind::lora;
  m.rank = rank;
  m.down = Tensor({d_in, rank});
  fill_truncated_normal(m.down, rng, kModuleInitStd);
  m.up = Tensor({rank, d_out});
  return m;
}

TuneModule make_adapter(std::string target, std::size_t d_in, std::size_t d_out, std::size_t rank, Rng& rng,
                        Activation activation) {
  check_rank(d_in, d_out, rank);
  TuneModule m;
  m.target = std::move(target);
  m.kind = ModuleKind::adapter;
  m.rank = rank;
  m.activation = activation;
  m.down = Tensor({d_out, rank});
  fill_truncated_normal(m.down, rng, kModuleInitStd);
  m.down_bias = Tensor({rank});
  m.up = Tensor({rank, d_out});
  m.up_bias = Tensor({d_out});
  return m;
}

ModuleVars bind_module(Tape& tape, const TuneModule& module, bool requires_grad) {
  ModuleVars vars;
  vars.down = tape.leaf(module.down, requires_grad);
  vars.up = tape.leaf(module.up, requires_grad);
  if (module.kind == ModuleKind::adapter) {
    vars.down_bias = tape.leaf(module.down_bias, requires_grad);
    vars.up_bias = tape.leaf(module.up_bias, requires_grad);
  }
  return vars;
}

Var lora_linear(Tape& tape, Var x, Var weight, const ModuleVars& vars) {
  Var base = tape.matmul(x, weight);
  Var branch = tape.matmul(tape.matmul(x, vars.down), vars.up);
  return tape.add(base, branch);
}

Var adapter_residual(Tape& tape, Var h, const ModuleVars& vars, Activation activation) {
  Var z = tape.add_bias(tape.matmul(h, vars.down), vars.down_bias);
  z = activation == Activation::relu ? tape.relu(z) : tape.gelu(z);
  Var delta = tape.add_bias(tape.matmul(z, vars.up), vars.up_bias);
  return tape.add(h, delta);
}

Tensor lora_forward(const Tensor& weight, const Tensor& x, const TuneModule& module) {
  if (module.kind != ModuleKind::lora) throw ContractError("lora_forward on a " + std::string(to_string(module.kind)));
  Tape tape;
  Var out = lora_linear(tape, tape.constant(x), tape.constant(weight), bind_module(tape, module, false));
  return tape.value(out);
}

Tensor adapter_forward(const Tensor& h, const TuneModule& module) {
  if (module.kind != ModuleKind::adapter) {
    throw ContractError("adapter_forward on a " + std::string(to_string(module.kind)));
  }
  Tape tape;
  Var out = adapter_residual(tape, tape.constant(h), bind_module(tape, module, false), module.activation);
  return tape.value(out);
}

Tensor merge_lora(const Tensor& weight, const TuneModule& module) {
  if (module.kind != ModuleKind::lora) throw ContractError("merge_lora on a " + std::string(to_string(module.kind)));
  Tensor delta = matmul(module.down, module.up);
  require_same_shape(weight, delta, "merge_lora");
  Tensor merged = weight;
  for (std::size_t i = 0; i < merged.size(); ++i) merged[i] += delta[i];
  return merged;
}

void merge_all_lora(ParameterStore& params, std::vector<TuneModule>& modules) {
  std::vector<TuneModule> kept;
  for (auto& m : modules) {
    if (m.kind == ModuleKind::lora) {
      Tensor& w = params.at(m.target);
      w = merge_lora(w, m);
    } else {
      kept.push_back(std::move(m));
    }
  }
  modules = std::move(kept);
}

void store_modules(const std::vector<TuneModule>& modules, TensorMap& out) {
  for (const auto& m : modules) {
    const std::string prefix = "module." + m.target + ".";
    if (m.kind == ModuleKind::lora) {
      out.add(prefix + "lora_down", m.down);
      out.add(prefix + "lora_up", m.up);
    } else {
      out.add(prefix + "adapter_down", m.down);
      out.add(prefix + "adapter_down_bias", m.down_bias);
      out.add(prefix + "adapter_up", m.up);
      out.add(prefix + "adapter_up_bias", m.up_bias);
      out.add(prefix + "adapter_act", Tensor::scalar(m.activation == Activation::gelu ? 1.0F : 0.0F));
    }
  }
}

std::vector<TuneModule> load_modules(const TensorMap& tensors) {
  std::map<std::string, TuneModule> by_target;
  std::vector<std::string> order;
  for (const auto& [name, tensor] : tensors) {
    if (!name.starts_with("module.")) continue;
    const auto dot = name.rfind('.');
    const std::string target = name.substr(7, dot - 7);
    const std::string field = name.substr(dot + 1);
    if (target.empty()) throw FormatError("module entry '" + name + "' has no target");
    auto [it, fresh] = by_target.try_emplace(target);
    if (fresh) order.push_back(target);
    TuneModule& m = it->second;
    m.target = target;
    if (field == "lora_down") {
      m.down = tensor;
    } else if (field == "lora_up") {
      m.up = tensor;
    } else if (field == "adapter_down") {
      m.kind = ModuleKind::adapter;
      m.down = tensor;
    } else if (field == "adapter_down_bias") {
      m.kind = ModuleKind::adapter;
      m.down_bias = tensor;
    } else if (field == "adapter_up") {
      m.kind = ModuleKind::adapter;
      m.up = tensor;
    } else if (field == "adapter_up_bias") {
      m.kind = ModuleKind::adapter;
      m.up_bias = tensor;
    } else if (field == "adapter_act") {
      m.kind = ModuleKind::adapter;
      m.activation = tensor[0] != 0.0F ? Activation::gelu : Activation::relu;
    } else {
      throw FormatError("unrecognized module field in '" + name + "'");
    }
  }
  std::vector<TuneModule> out;
  for (const auto& target : order) {
    TuneModule m = std::move(by_target[target]);
    bool complete = !m.down.empty() && !m.up.empty() && m.down.rank() == 2;
    if (m.kind == ModuleKind::adapter) complete = complete && !m.down_bias.empty() && !m.up_bias.empty();
    if (!complete) throw FormatError("module for '" + target + "' is missing fields");
    m.rank = m.down.shape()[1];
    out.push_back(std::move(m));
  }
  return out;
}

void apply_update(Tensor& weight, const Tensor& grad, float lr) {
  require_same_shape(weight, grad, "apply_update");
  for (std::size_t i = 0; i < weight.size(); ++i) weight[i] -= lr * grad[i];
}

void apply_masked_update(Tensor& weight, const Tensor& grad, const Mask& mask, float lr) {
  require_same_shape(weight, grad, "apply_masked_update");
  if (mask.shape() != weight.shape()) {
    throw ContractError("apply_masked_update: mask " + to_string(mask.shape()) + " vs weight " +
                        to_string(weight.shape()));
  }
  for (std::size_t i = 0; i < weight.size(); ++i) {
    if (mask[i]) weight[i] -= lr * grad[i];
  }
}

namespace {

template <typename Selected>
void adamw_step(Tensor& weight, const Tensor& grad, AdamWState& state, const AdamWConfig& cfg, float lr,
                Selected selected) {
  require_same_shape(weight, grad, "adamw");
  require_same_shape(weight, state.m, "adamw state");
  ++state.step;
  const auto t = static_cast<double>(state.step);
  const float bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta1), t));
  const float bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta2), t));
  const float decay = lr * cfg.weight_decay;
  for (std::size_t i = 0; i < weight.size(); ++i) {
    if (!selected(i)) continue;
    const float g = grad[i];
    float& m = state.m[i];
    float& v = state.v[i];
    m = cfg.beta1 * m + (1.0F - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0F - cfg.beta2) * g * g;
    const float m_hat = m / bc1;
    const float v_hat = v / bc2;
    weight[i] -= decay * weight[i];
    weight[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

}  // namespace

void apply_update(Tensor& weight, const Tensor& grad, AdamWState& state, const AdamWConfig& cfg, float lr) {
  adamw_step(weight, grad, state, cfg, lr, [](std::size_t) { return true; });
}

void apply_masked_update(Tensor& weight, const Tensor& grad, const Mask& mask, AdamWState& state,
                         const AdamWConfig& cfg, float lr) {
  if (mask.shape() != weight.shape()) {
    throw ContractError("apply_masked_update: mask " + to_string(mask.shape()) + " vs weight " +
                        to_string(weight.shape()));
  }
  adamw_step(weight, grad, state, cfg, lr, [&](std::size_t i) { return mask[i]; });
}

}  // namespace spt
