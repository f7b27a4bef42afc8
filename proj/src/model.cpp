// SPDX-License-Identifier: Apache-2.0

#include "spt/model.hpp"

#include <algorithm>
#include <charconv>
#include <unordered_map>

#include "spt/error.hpp"
#include "spt/random.hpp"

namespace spt {

namespace {

constexpr float kInitStd = 0.02F;

void add_matrix(ParameterStore& store, Rng& rng, const std::string& name, std::size_t d_in, std::size_t d_out) {
  Tensor w({d_in, d_out});
  fill_truncated_normal(w, rng, kInitStd);
  store.add(name, std::move(w));
}

void add_linear(ParameterStore& store, Rng& rng, const std::string& name, std::size_t d_in, std::size_t d_out) {
  add_matrix(store, rng, name, d_in, d_out);
  store.add(name + ".bias", Tensor({d_out}));
}

void add_norm(ParameterStore& store, const std::string& name, std::size_t width) {
  store.add(name + ".weight", Tensor({width}, 1.0F));
  store.add(name + ".bias", Tensor({width}));
}

std::string block_name(std::size_t i, std::string_view role) {
  return "block" + std::to_string(i) + "." + std::string(role);
}

/// Binds parameters and modules, and routes linear layers through attached modules.
class Builder {
 public:
  Builder(Tape& tape, const ParameterStore& params, std::span<const TuneModule> modules, const GradPolicy& policy)
      : tape_(tape), params_(params), modules_(modules) {
    graph_.params.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      const bool grad = !policy.params.empty() && policy.params[i];
      graph_.params.push_back(tape.leaf(params.entry(i).second, grad));
    }
    graph_.modules.reserve(modules.size());
    for (std::size_t i = 0; i < modules.size(); ++i) {
      const TuneModule& m = modules[i];
      if (!params.contains(m.target)) throw ConfigError("module targets unknown matrix '" + m.target + "'");
      const Tensor& w = params.at(m.target);
      if (!is_structured_eligible(m.target, w.shape())) {
        throw ConfigError("matrix '" + m.target + "' cannot host a structured module");
      }
      const bool fits = m.kind == ModuleKind::lora
                            ? (m.down.shape() == Shape{w.shape()[0], m.rank} &&
                               m.up.shape() == Shape{m.rank, w.shape()[1]})
                            : (m.down.shape() == Shape{w.shape()[1], m.rank} &&
                               m.up.shape() == Shape{m.rank, w.shape()[1]});
      if (!fits) throw ConfigError("module for '" + m.target + "' does not match matrix " + to_string(w.shape()));
      if (!by_target_.emplace(m.target, i).second) {
        throw ConfigError("more than one module targets '" + m.target + "'");
      }
      graph_.modules.push_back(bind_module(tape, m, policy.modules));
    }
  }

  Var param(const std::string& name) const { return graph_.params[params_.index_of(name)]; }

  /// x * W (+ bias), with any attached module applied.
  Var linear(Var x, const std::string& name, bool has_bias = true) {
    Var w = param(name);
    auto it = by_target_.find(name);
    const TuneModule* module = it == by_target_.end() ? nullptr : &modules_[it->second];
    Var out;
    if (module != nullptr && module->kind == ModuleKind::lora) {
      out = lora_linear(tape_, x, w, graph_.modules[it->second]);
    } else {
      out = tape_.matmul(x, w);
    }
    if (has_bias) out = tape_.add_bias(out, param(name + ".bias"));
    if (module != nullptr && module->kind == ModuleKind::adapter) {
      out = adapter_residual(tape_, out, graph_.modules[it->second], module->activation);
    }
    return out;
  }

  ForwardGraph finish(Var logits) {
    graph_.logits = logits;
    return std::move(graph_);
  }

 private:
  Tape& tape_;
  const ParameterStore& params_;
  std::span<const TuneModule> modules_;
  std::unordered_map<std::string, std::size_t> by_target_;
  ForwardGraph graph_;
};

}  // namespace

void ModelConfig::validate() const {
  if (depth < 1 || width < 1 || heads < 1 || mlp_ratio < 1 || num_classes < 1 || seq < 1 || input_dim < 1) {
    throw ConfigError("model config fields must all be >= 1");
  }
  if (variant == Variant::transformer && width % heads != 0) {
    throw ConfigError("width " + std::to_string(width) + " is not divisible by heads " + std::to_string(heads));
  }
}

const char* to_string(Variant v) noexcept { return v == Variant::transformer ? "transformer" : "mlp"; }

Variant parse_variant(std::string_view text) {
  if (text == "transformer") return Variant::transformer;
  if (text == "mlp") return Variant::mlp;
  throw ConfigError("unknown model variant '" + std::string(text) + "'");
}

ParameterStore build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng = derive_rng(seed, 0x6d6f64656cULL);
  ParameterStore store;
  const std::size_t d = config.width;
  if (config.variant == Variant::transformer) {
    add_matrix(store, rng, "embed", config.input_dim, d);
    for (std::size_t i = 0; i < config.depth; ++i) {
      add_norm(store, block_name(i, "ln1"), d);
      for (std::string_view role : {"q", "k", "v", "o"}) add_linear(store, rng, block_name(i, role), d, d);
      add_norm(store, block_name(i, "ln2"), d);
      add_linear(store, rng, block_name(i, "fc1"), d, config.hidden());
      add_linear(store, rng, block_name(i, "fc2"), config.hidden(), d);
    }
  } else {
    std::size_t in = config.seq * config.input_dim;
    for (std::size_t i = 0; i < config.depth; ++i) {
      add_linear(store, rng, block_name(i, "fc1"), in, config.hidden());
      add_linear(store, rng, block_name(i, "fc2"), config.hidden(), d);
      in = d;
    }
  }
  add_linear(store, rng, "head", d, config.num_classes);
  return store;
}

std::optional<std::size_t> block_index(std::string_view name) {
  if (!name.starts_with("block")) return std::nullopt;
  name.remove_prefix(5);
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), value);
  if (ec != std::errc{} || ptr == name.data() || ptr == name.data() + name.size() || *ptr != '.') {
    return std::nullopt;
  }
  return value;
}

std::string_view matrix_role(std::string_view name) {
  if (!block_index(name)) return {};
  const auto dot = name.find('.');
  std::string_view role = name.substr(dot + 1);
  for (std::string_view r : kMatrixRoles) {
    if (role == r) return r;
  }
  return {};
}

bool is_head(std::string_view name) { return name == "head" || name == "head.bias"; }

bool is_bias(std::string_view name) { return name.ends_with(".bias"); }

bool is_structured_eligible(std::string_view name, const Shape& shape) {
  return shape.size() == 2 && !matrix_role(name).empty();
}

ForwardGraph forward(Tape& tape, const ModelConfig& config, const ParameterStore& params, const Tensor& batch,
                     std::span<const TuneModule> modules, const GradPolicy& policy) {
  if (batch.rank() != 3 || batch.shape()[1] != config.seq || batch.shape()[2] != config.input_dim) {
    throw DimensionError("batch " + to_string(batch.shape()) + " does not match [n x " + std::to_string(config.seq) +
                         " x " + std::to_string(config.input_dim) + "]");
  }
  if (!policy.params.empty() && policy.params.size() != params.size()) {
    throw ContractError("grad policy does not cover the parameter store");
  }
  const std::size_t n = batch.shape()[0];
  Builder b(tape, params, modules, policy);

  if (config.variant == Variant::transformer) {
    Var x = tape.constant(batch.reshaped({n * config.seq, config.input_dim}));
    Var h = b.linear(x, "embed", false);
    for (std::size_t i = 0; i < config.depth; ++i) {
      const auto name = [i](std::string_view role) { return block_name(i, role); };
      Var a = tape.layer_norm(h, b.param(name("ln1.weight")), b.param(name("ln1.bias")));
      Var q = b.linear(a, name("q"));
      Var k = b.linear(a, name("k"));
      Var v = b.linear(a, name("v"));
      Var att = tape.attention(q, k, v, n, config.seq, config.heads);
      h = tape.add(h, b.linear(att, name("o")));
      Var m = tape.layer_norm(h, b.param(name("ln2.weight")), b.param(name("ln2.bias")));
      Var f = b.linear(tape.gelu(b.linear(m, name("fc1"))), name("fc2"));
      h = tape.add(h, f);
    }
    Var pooled = tape.mean_pool(h, n, config.seq);
    return b.finish(b.linear(pooled, "head"));
  }

  Var h = tape.constant(batch.reshaped({n, config.seq * config.input_dim}));
  for (std::size_t i = 0; i < config.depth; ++i) {
    h = tape.gelu(b.linear(h, block_name(i, "fc1")));
    h = tape.gelu(b.linear(h, block_name(i, "fc2")));
  }
  return b.finish(b.linear(h, "head"));
}

Tensor forward(const ModelConfig& config, const ParameterStore& params, const Tensor& batch,
               std::span<const TuneModule> modules) {
  Tape tape;
  ForwardGraph g = forward(tape, config, params, batch, modules, GradPolicy::none());
  return tape.value(g.logits);
}

TuneModule make_module(const ParameterStore& params, const std::string& target, ModuleKind kind, std::size_t rank,
                       Rng& rng, Activation activation) {
  const Tensor& w = params.at(target);
  if (!is_structured_eligible(target, w.shape())) {
    throw ConfigError("matrix '" + target + "' cannot host a structured module");
  }
  if (kind == ModuleKind::lora) return make_lora(target, w.shape()[0], w.shape()[1], rank, rng);
  return make_adapter(target, w.shape()[0], w.shape()[1], rank, rng, activation);
}

}  // namespace spt
