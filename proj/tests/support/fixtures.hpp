// SPDX-License-Identifier: Apache-2.0
//
// Small end-to-end scenarios shared by tests: a task, a backbone pre-trained
// on its source domain, and the shifted target domain.

#pragma once

#include <cstdint>
#include <random>

#include "spt/random.hpp"
#include "spt/sensitivity.hpp"

#include "spt/model.hpp"
#include "spt/task.hpp"
#include "spt/training.hpp"

namespace fixture {

struct Scenario {
  spt::ModelConfig model;
  spt::TaskData data;
  spt::ParameterStore pretrained;
};

inline Scenario pretrained(const spt::ModelConfig& model, const spt::TaskSpec& spec, std::uint64_t seed,
                           std::size_t epochs) {
  Scenario s;
  s.model = model;
  s.data = spt::generate_task(spec, seed);
  spt::TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.seed = seed;
  cfg.eval_every = epochs;
  cfg.stop_accuracy = 0.0;
  s.pretrained = spt::pretrain(model, spt::build_model(model, seed), s.data.source, cfg).params;
  return s;
}

/// An mlp-variant model with 167 parameters on a 3-class, 4-feature task.
inline Scenario tiny_mlp(std::uint64_t seed, double theta = 0.8) {
  spt::ModelConfig m;
  m.variant = spt::Variant::mlp;
  m.depth = 2;
  m.width = 4;
  m.mlp_ratio = 2;
  m.num_classes = 3;
  m.seq = 1;
  m.input_dim = 4;
  spt::TaskSpec t;
  t.classes = 3;
  t.dim = 4;
  t.seq = 1;
  t.theta = theta;
  t.noise = 0.3;
  t.train = 800;
  t.val = 200;
  t.source_train = 600;
  t.source_val = 200;
  return pretrained(m, t, seed, 20);
}

/// A two-block transformer on a 4-class task.
inline Scenario small_transformer(std::uint64_t seed, double theta = 0.8) {
  spt::ModelConfig m;
  m.depth = 2;
  m.width = 16;
  m.heads = 2;
  m.mlp_ratio = 2;
  m.num_classes = 4;
  m.seq = 4;
  m.input_dim = 8;
  spt::TaskSpec t;
  t.classes = 4;
  t.dim = 8;
  t.seq = 4;
  t.theta = theta;
  t.noise = 0.5;
  t.train = 800;
  t.val = 200;
  t.source_train = 800;
  t.source_val = 200;
  return pretrained(m, t, seed, 5);
}

/// Random non-negative scores over `layout`: heavy-tailed, with a share of
/// exact ties and zeros.
inline spt::SensitivityMap random_map(const spt::TensorMap& layout, spt::Rng& rng) {
  std::exponential_distribution<float> heavy(1.0F);
  std::uniform_int_distribution<int> kind(0, 9);
  spt::SensitivityMap m = spt::zero_map(layout);
  // Concentrate mass on a random subset of tensors so some matrices cross sigma.
  for (auto& [name, t] : m.scores) {
    const float boost = kind(rng) < 3 ? 50.0F : 1.0F;
    for (auto& v : t.values()) {
      const int k = kind(rng);
      v = k == 0 ? 0.0F : k == 1 ? 0.5F : boost * heavy(rng);
    }
  }
  m.samples_used = 1;
  return m;
}

}  // namespace fixture
