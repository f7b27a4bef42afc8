// SPDX-License-Identifier: Apache-2.0

#include "spt/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>

#include "spt/error.hpp"
#include "spt/random.hpp"

namespace spt {

void TrainConfig::validate() const {
  if (batch < 1) throw ConfigError("train batch must be >= 1");
  if (!(lr >= 0.0F) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
  if (!(weight_decay >= 0.0F)) throw ConfigError("weight decay must be >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (eval_every < 1) throw ConfigError("eval cadence must be >= 1");
}

float cosine_lr(float lr, std::size_t step, std::size_t total_steps) {
  if (total_steps <= 1) return lr;
  const double progress = static_cast<double>(std::min(step, total_steps - 1)) / static_cast<double>(total_steps - 1);
  return static_cast<float>(static_cast<double>(lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

double evaluate_accuracy(const ModelConfig& config, const ParameterStore& params, const Dataset& data,
                         std::span<const TuneModule> modules) {
  constexpr std::size_t kChunk = 256;
  std::size_t correct = 0;
  for (std::size_t lo = 0; lo < data.size(); lo += kChunk) {
    const std::size_t hi = std::min(data.size(), lo + kChunk);
    const Dataset part = data.slice(lo, hi);
    const Tensor logits = forward(config, params, part.features, modules);
    const std::size_t classes = logits.shape()[1];
    for (std::size_t r = 0; r < part.size(); ++r) {
      const float* row = logits.data() + r * classes;
      const auto best = static_cast<int>(std::max_element(row, row + classes) - row);
      if (best == part.labels[r]) ++correct;
    }
  }
  return data.size() == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

/// Optimizer slot for one trainable tensor.
struct Slot {
  std::size_t param = 0;                // index into the ParameterStore, or
  std::optional<std::size_t> module;    // index into the module list
  int field = 0;                        // 0 down, 1 up, 2 down_bias, 3 up_bias
  const Mask* mask = nullptr;
  AdamWState state;
};

Tensor& module_field(TuneModule& m, int field) {
  switch (field) {
    case 0: return m.down;
    case 1: return m.up;
    case 2: return m.down_bias;
    default: return m.up_bias;
  }
}

Var module_var(const ModuleVars& v, int field) {
  switch (field) {
    case 0: return v.down;
    case 1: return v.up;
    case 2: return v.down_bias;
    default: return v.up_bias;
  }
}

struct LoopState {
  ParameterStore params;
  std::vector<TuneModule> modules;
  std::vector<Slot> slots;
  GradPolicy policy;
};

/// Shared epoch/step loop. Returns the evaluation history; `stop` decides
/// early termination after an evaluation.
std::vector<EvalRecord> run_loop(const ModelConfig& config, LoopState& s, const TaskSplit& split,
                                 const TrainConfig& cfg, const EvalSink& sink,
                                 const std::function<bool(const EvalRecord&)>& stop, std::size_t& epochs_run) {
  cfg.validate();
  split.train.validate(config.num_classes);
  split.val.validate(config.num_classes);
  const std::size_t n = split.train.size();
  const std::size_t steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  const AdamWConfig adam{0.9F, 0.999F, 1e-8F, cfg.weight_decay};

  Rng shuffle_rng = derive_rng(cfg.seed, 0x73687566ULL);
  Rng noise_rng = derive_rng(cfg.seed, 0x6e6f6973ULL);
  std::normal_distribution<float> noise(0.0F, cfg.augment_noise > 0.0F ? cfg.augment_noise : 1.0F);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<EvalRecord> history;
  std::size_t step = 0;
  epochs_run = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t lo = 0; lo < n; lo += cfg.batch, ++step) {
      const std::size_t hi = std::min(n, lo + cfg.batch);
      Dataset batch = split.train.gather(std::span(order).subspan(lo, hi - lo));
      if (cfg.augment_noise > 0.0F) {
        for (auto& v : batch.features.values()) v += noise(noise_rng);
      }
      Tape tape;
      ForwardGraph g = forward(tape, config, s.params, batch.features, s.modules, s.policy);
      Var loss = tape.cross_entropy(g.logits, batch.labels);
      const float loss_value = tape.value(loss)[0];
      if (!std::isfinite(loss_value)) throw RunError("non-finite loss at step " + std::to_string(step));
      loss_sum += loss_value;
      if (s.slots.empty()) continue;
      GradientSnapshot grads = tape.backward(loss);
      const float lr = cosine_lr(cfg.lr, step, total_steps);
      for (Slot& slot : s.slots) {
        Tensor* weight = nullptr;
        Var var;
        if (slot.module) {
          weight = &module_field(s.modules[*slot.module], slot.field);
          var = module_var(g.modules[*slot.module], slot.field);
        } else {
          weight = &s.params.entry(slot.param).second;
          var = g.params[slot.param];
        }
        if (slot.mask != nullptr) {
          apply_masked_update(*weight, grads[var], *slot.mask, slot.state, adam, lr);
        } else {
          apply_update(*weight, grads[var], slot.state, adam, lr);
        }
      }
    }
    epochs_run = epoch;
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
      EvalRecord rec;
      rec.epoch = epoch;
      rec.step = step;
      rec.train_loss = loss_sum / static_cast<double>(steps_per_epoch);
      rec.accuracy = evaluate_accuracy(config, s.params, split.val, s.modules);
      rec.lr = cosine_lr(cfg.lr, step == 0 ? 0 : step - 1, total_steps);
      history.push_back(rec);
      if (sink) sink(rec);
      if (stop && stop(rec)) break;
    }
  }
  return history;
}

}  // namespace

PretrainResult pretrain(const ModelConfig& config, ParameterStore params, const TaskSplit& split,
                        const TrainConfig& cfg, const EvalSink& sink) {
  config.validate();
  LoopState s;
  s.params = std::move(params);
  s.policy = GradPolicy::all_params(s.params);
  for (std::size_t i = 0; i < s.params.size(); ++i) {
    s.slots.push_back(Slot{i, std::nullopt, 0, nullptr, AdamWState(s.params.entry(i).second.shape())});
  }
  PretrainResult out;
  auto stop = [&](const EvalRecord& r) { return cfg.stop_accuracy > 0.0 && r.accuracy >= cfg.stop_accuracy; };
  out.history = run_loop(config, s, split, cfg, sink, stop, out.epochs_run);
  out.accuracy = out.history.empty() ? 0.0 : out.history.back().accuracy;
  out.params = std::move(s.params);
  return out;
}

FinetuneResult finetune(const ModelConfig& config, ParameterStore params, const AllocationPlan& plan,
                        const TaskSplit& split, const TrainConfig& cfg, const FinetuneOptions& options,
                        const EvalSink& sink) {
  config.validate();
  check_plan_matches(plan, params);
  LoopState s;
  s.params = std::move(params);
  s.policy.params.assign(s.params.size(), false);
  s.policy.modules = true;

  Rng module_rng = derive_rng(cfg.seed, 0x6d6f64ULL);
  if (options.reinit_head) {
    Rng head_rng = derive_rng(cfg.seed, 0x68656164ULL);
    for (const auto& name : plan.always_trainable) {
      Tensor& t = s.params.at(name);
      if (t.rank() == 2) {
        fill_truncated_normal(t, head_rng, 0.02F);
      } else {
        t.fill(0.0F);
      }
    }
  }

  FinetuneResult out;
  for (const auto& name : plan.always_trainable) {
    const std::size_t i = s.params.index_of(name);
    s.policy.params[i] = true;
    s.slots.push_back(Slot{i, std::nullopt, 0, nullptr, AdamWState(s.params.entry(i).second.shape())});
    out.tuned += s.params.entry(i).second.size();
  }
  for (const auto& entry : plan.tensors) {
    const std::size_t i = s.params.index_of(entry.name);
    if (entry.verdict == Verdict::unstructured) {
      s.policy.params[i] = true;
      s.slots.push_back(Slot{i, std::nullopt, 0, &entry.mask, AdamWState(entry.shape)});
      out.tuned += entry.mask.popcount();
    } else if (entry.verdict == Verdict::structured) {
      s.modules.push_back(
          make_module(s.params, entry.name, entry.kind, entry.rank, module_rng, options.adapter_activation));
      out.tuned += s.modules.back().parameter_count();
    }
  }
  for (std::size_t m = 0; m < s.modules.size(); ++m) {
    const int fields = s.modules[m].kind == ModuleKind::adapter ? 4 : 2;
    for (int f = 0; f < fields; ++f) {
      s.slots.push_back(Slot{0, m, f, nullptr, AdamWState(module_field(s.modules[m], f).shape())});
    }
  }

  std::size_t epochs_run = 0;
  out.history = run_loop(config, s, split, cfg, sink, {}, epochs_run);
  out.accuracy = out.history.empty() ? 0.0 : out.history.back().accuracy;
  out.total = s.params.total_elements();
  out.params = std::move(s.params);
  out.modules = std::move(s.modules);
  return out;
}

AllocationPlan frozen_plan(const TensorMap& layout) {
  PlanOptions opts;
  opts.structured = StructuredKind::none;
  return plan_from_connections(layout, {}, 0, opts);
}

AllocationPlan dense_plan(const TensorMap& layout) {
  std::vector<Connection> all;
  for (std::uint32_t t = 0; t < layout.size(); ++t) {
    if (is_head(layout.entry(t).first)) continue;
    for (std::size_t i = 0; i < layout.entry(t).second.size(); ++i) all.push_back({t, i});
  }
  PlanOptions opts;
  opts.structured = StructuredKind::none;
  return plan_from_connections(layout, all, all.size(), opts);
}

std::vector<Connection> random_connections(const TensorMap& layout, std::size_t tau,
                                           const std::set<std::string>& exclusions, std::uint64_t seed) {
  std::vector<Connection> pool;
  for (std::uint32_t t = 0; t < layout.size(); ++t) {
    if (exclusions.contains(layout.entry(t).first)) continue;
    for (std::size_t i = 0; i < layout.entry(t).second.size(); ++i) pool.push_back({t, i});
  }
  if (tau == 0 || tau > pool.size()) {
    throw ArgumentError("tau = " + std::to_string(tau) + " outside [1, " + std::to_string(pool.size()) + "]");
  }
  Rng rng = derive_rng(seed, 0x72616e64ULL);
  for (std::size_t i = 0; i < tau; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(tau);
  std::sort(pool.begin(), pool.end());
  return pool;
}

AllocationPlan relocate_structured(const AllocationPlan& plan, std::uint64_t seed) {
  if (plan.count(Verdict::unstructured) != 0) {
    throw ContractError("relocate_structured expects a structured-only plan");
  }
  AllocationPlan out = plan;
  std::map<Shape, std::vector<std::size_t>> candidates;
  for (std::size_t i = 0; i < out.tensors.size(); ++i) {
    if (is_structured_eligible(out.tensors[i].name, out.tensors[i].shape)) candidates[out.tensors[i].shape].push_back(i);
  }
  std::vector<std::size_t> moved;
  for (std::size_t i = 0; i < out.tensors.size(); ++i) {
    if (out.tensors[i].verdict == Verdict::structured) moved.push_back(i);
  }
  Rng rng = derive_rng(seed, 0x72656c6fULL);
  std::vector<TensorPlan> placed;
  for (std::size_t i : moved) {
    auto& pool = candidates.at(out.tensors[i].shape);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const std::size_t slot = pick(rng);
    const std::size_t dest = pool[slot];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(slot));
    TensorPlan p = out.tensors[i];
    p.name = out.tensors[dest].name;
    p.sensitive = out.tensors[dest].sensitive;
    p.sigma = out.tensors[dest].sigma;
    placed.push_back(std::move(p));
  }
  for (std::size_t i : moved) {
    auto& t = out.tensors[i];
    t.verdict = Verdict::frozen;
    t.trainable = 0;
    t.rank = 0;
  }
  for (auto& p : placed) {
    for (auto& t : out.tensors) {
      if (t.name == p.name) t = std::move(p);
    }
  }
  return out;
}

}  // namespace spt
