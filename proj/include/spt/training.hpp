// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "spt/allocation.hpp"
#include "spt/dataset.hpp"
#include "spt/model.hpp"
#include "spt/task.hpp"

namespace spt {

/// AdamW with cosine decay. Defaults: batch 64, lr 1e-3, weight decay 1e-4.
struct TrainConfig {
  std::size_t batch = 64;
  float lr = 1e-3F;
  float weight_decay = 1e-4F;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  /// Evaluate every this many epochs (and always after the last one).
  std::size_t eval_every = 10;
  /// Pre-training stops early once validation accuracy reaches this; 0 disables.
  double stop_accuracy = 0.9;
  /// Std of Gaussian feature noise added to training batches; 0 = off.
  float augment_noise = 0.0F;

  /// Throws ConfigError.
  void validate() const;
};

/// lr at `step` of `total_steps`: lr * (1 + cos(pi * step / (total_steps - 1))) / 2.
/// Starts at lr and reaches 0 on the final step.
float cosine_lr(float lr, std::size_t step, std::size_t total_steps);

struct EvalRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double train_loss = 0.0;
  double accuracy = 0.0;
  float lr = 0.0F;
};

using EvalSink = std::function<void(const EvalRecord&)>;

double evaluate_accuracy(const ModelConfig& config, const ParameterStore& params, const Dataset& data,
                         std::span<const TuneModule> modules = {});

struct PretrainResult {
  ParameterStore params;
  std::vector<EvalRecord> history;
  double accuracy = 0.0;
  std::size_t epochs_run = 0;
};

/// Trains every parameter on `split.train` until validation accuracy reaches
/// cfg.stop_accuracy or the epoch cap. Throws RunError on a non-finite loss.
PretrainResult pretrain(const ModelConfig& config, ParameterStore params, const TaskSplit& split,
                        const TrainConfig& cfg, const EvalSink& sink = {});

struct FinetuneOptions {
  Activation adapter_activation = Activation::relu;
  /// Re-draw the head before fine-tuning (for tasks with new label semantics).
  bool reinit_head = false;
};

struct FinetuneResult {
  ParameterStore params;
  std::vector<TuneModule> modules;
  std::vector<EvalRecord> history;
  double accuracy = 0.0;
  /// Scalars actually updated: masked entries, module parameters, head.
  std::size_t tuned = 0;
  std::size_t total = 0;  // N, backbone plus head
  double tuned_fraction() const { return total == 0 ? 0.0 : static_cast<double>(tuned) / static_cast<double>(total); }
};

/// Fine-tunes `params` on the target split following `plan`: masked AdamW for
/// unstructured tensors, fresh LoRA/Adapter modules for structured ones,
/// dense updates for the head. All other tensors stay bit-identical.
/// Throws ConfigError when the plan does not match the registry.
FinetuneResult finetune(const ModelConfig& config, ParameterStore params, const AllocationPlan& plan,
                        const TaskSplit& split, const TrainConfig& cfg, const FinetuneOptions& options = {},
                        const EvalSink& sink = {});

/// Every non-head tensor Frozen: head-only (linear probing).
AllocationPlan frozen_plan(const TensorMap& layout);
/// Every non-head tensor fully masked in: full fine-tuning.
AllocationPlan dense_plan(const TensorMap& layout);

/// tau connections drawn uniformly at random from the eligible tensors.
std::vector<Connection> random_connections(const TensorMap& layout, std::size_t tau,
                                           const std::set<std::string>& exclusions, std::uint64_t seed);

/// Moves each structured verdict of `plan` to a distinct, randomly chosen
/// structured-eligible matrix of the same shape. Budget is unchanged.
AllocationPlan relocate_structured(const AllocationPlan& plan, std::uint64_t seed);

}  // namespace spt
