// SPDX-License-Identifier: Apache-2.0
//
// The desk-scale transfer setting used by the experiment-style checks:
// 8 classes on 4-d tokens, a 2-block width-32 transformer pre-trained on the
// source domain, fine-tuned on the rotated target with default AdamW settings.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <utility>

#include "spt/allocation.hpp"
#include "spt/model.hpp"
#include "spt/sensitivity.hpp"
#include "spt/task.hpp"
#include "spt/training.hpp"

namespace desk {

inline constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

inline spt::TaskSpec task(double theta) {
  spt::TaskSpec t;
  t.classes = 8;
  t.dim = 4;
  t.seq = 4;
  t.theta = theta;
  t.noise = 0.3;
  t.train = 800;
  t.val = 200;
  t.source_train = 2000;
  t.source_val = 400;
  return t;
}

inline spt::ModelConfig model() {
  spt::ModelConfig m;
  m.depth = 2;
  m.width = 32;
  m.heads = 2;
  m.mlp_ratio = 2;
  m.num_classes = 8;
  m.seq = 4;
  m.input_dim = 4;
  return m;
}

/// Library defaults (batch 64, lr 1e-3, wd 1e-4, 100 epochs), one eval at the end.
inline spt::TrainConfig finetune_config(std::uint64_t seed) {
  spt::TrainConfig c;
  c.seed = seed;
  c.eval_every = c.epochs;
  c.stop_accuracy = 0.0;
  return c;
}

struct Backbone {
  spt::ModelConfig model;
  spt::TaskData data;
  spt::ParameterStore params;
  double source_accuracy = 0.0;
  spt::SensitivityMap sens;  // C = 800 on the target training split
};

/// Pre-trains until 90% source accuracy or 50 epochs. Cached per (theta, seed).
inline const Backbone& backbone(double theta, std::uint64_t seed) {
  static std::map<std::pair<double, std::uint64_t>, Backbone> cache;
  auto it = cache.find({theta, seed});
  if (it != cache.end()) return it->second;
  Backbone b;
  b.model = model();
  b.data = spt::generate_task(task(theta), seed);
  spt::TrainConfig c;
  c.seed = seed;
  c.epochs = 50;
  c.eval_every = 5;
  c.stop_accuracy = 0.9;
  const spt::PretrainResult r = spt::pretrain(b.model, spt::build_model(b.model, seed), b.data.source, c);
  b.params = r.params;
  b.source_accuracy = r.accuracy;
  spt::SensitivityOptions o;
  o.samples = 800;
  b.sens = spt::compute_sensitivity(b.model, b.params, b.data.target.train, o);
  return cache.emplace(std::make_pair(theta, seed), std::move(b)).first->second;
}

inline std::size_t budget(const Backbone& b, const char* fraction, bool exclude_bias = false) {
  return spt::resolve_budget(fraction, b.params.total_elements(),
                             spt::eligible_count(b.sens, spt::default_exclusions(b.params, exclude_bias)));
}

inline spt::PlanOptions lora_r1() {
  spt::PlanOptions o;
  o.rank = 1;
  return o;
}

inline double tune(const Backbone& b, const spt::AllocationPlan& plan, std::uint64_t seed) {
  return spt::finetune(b.model, b.params, plan, b.data.target, finetune_config(seed)).accuracy;
}

/// Correct predictions on the 200-sample validation split.
inline long correct(double accuracy) { return std::lround(accuracy * 200.0); }

}  // namespace desk
