// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "spt/allocation.hpp"
#include "spt/model.hpp"
#include "spt/sensitivity.hpp"
#include "spt/task.hpp"
#include "spt/training.hpp"

namespace spt {

struct SptSettings {
  std::string budget = "0.005";
  StructuredKind structured = StructuredKind::lora;
  std::size_t rank = 8;
  SigmaPolicy sigma_policy = SigmaPolicy::module_param_count;
  std::size_t samples = 800;  // C
  bool exclude_bias = false;
  bool allow_unstructured = true;
  Criterion criterion = Criterion::gradient_squared;
  std::size_t sens_batch = 1;
  std::size_t workers = 1;
  Activation activation = Activation::relu;

  PlanOptions plan_options() const;
  SensitivityOptions sensitivity_options() const;
};

/// Everything one experiment needs. Loaded from a JSON document with the
/// sections model, task, pretrain, train and spt; every key is optional.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  TaskSpec task;
  TrainConfig pretrain;
  TrainConfig train;
  SptSettings spt;

  /// Cross-section checks (class counts, sequence length); throws ConfigError.
  void validate() const;
};

/// Parses and validates. Unknown keys and ill-typed values throw ConfigError.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);

}  // namespace spt
