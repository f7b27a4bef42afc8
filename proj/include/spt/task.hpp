// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

#include "spt/dataset.hpp"

namespace spt {

/// Synthetic transfer task: a source domain for pre-training and a target
/// domain whose features are the source clusters rotated by `theta` in one
/// random plane, optionally with deranged labels (every class gets a new label).
struct TaskSpec {
  std::size_t classes = 4;
  std::size_t dim = 16;
  std::size_t seq = 4;
  double theta = 0.0;  // [0, pi]
  bool permute = false;
  double noise = 0.5;  // per-coordinate std of each token around its class mean
  std::size_t train = 800;
  std::size_t val = 200;
  std::size_t source_train = 2000;
  std::size_t source_val = 400;

  /// Throws ConfigError.
  void validate() const;
};

struct TaskSplit {
  Dataset train;
  Dataset val;
};

struct TaskData {
  TaskSplit source;
  TaskSplit target;
};

/// Class means are random unit vectors; every token of a sample is its class
/// mean plus isotropic Gaussian noise. Target samples draw fresh noise around
/// the same means and are then rotated. Deterministic in (spec, seed).
TaskData generate_task(const TaskSpec& spec, std::uint64_t seed);

}  // namespace spt
