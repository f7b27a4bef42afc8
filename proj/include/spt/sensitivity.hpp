// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>

#include "spt/autodiff.hpp"
#include "spt/dataset.hpp"
#include "spt/model.hpp"
#include "spt/tensor_map.hpp"

namespace spt {

/// Accumulated per-parameter scores, shape-aligned with a ParameterStore.
struct SensitivityMap {
  TensorMap scores;
  std::size_t samples_used = 0;
};

enum class Criterion {
  gradient_squared,  // s_n += g_n^2
  magnitude,         // s_n += (g_n * w_n)^2
};

struct SensitivityOptions {
  std::size_t samples = 800;  // C
  /// 1 = per-sample reference mode. b > 1 accumulates b * (batch-mean gradient)^2.
  std::size_t batch = 1;
  /// Contiguous shards of the sample range scored on separate threads and
  /// merged in shard order.
  std::size_t workers = 1;
};

/// Records the mean loss over samples [begin, end) given the bound parameters.
using LossFn = std::function<Var(Tape& tape, std::span<const Var> params, std::size_t begin, std::size_t end)>;

/// Scores every entry of `params` over the first `options.samples` samples
/// using an arbitrary loss. Parameters are never modified.
/// Throws ArgumentError for C == 0 and NumericalError (naming the sample)
/// when a loss is non-finite.
SensitivityMap score_parameters(const ParameterStore& params, const LossFn& loss, Criterion criterion,
                                const SensitivityOptions& options);

/// Cross-entropy of the model on `data`, scored with g^2.
SensitivityMap compute_sensitivity(const ModelConfig& config, const ParameterStore& params, const Dataset& data,
                                   const SensitivityOptions& options);

/// Same sweep with the (g * w)^2 increment.
SensitivityMap compute_importance_magnitude(const ModelConfig& config, const ParameterStore& params,
                                            const Dataset& data, const SensitivityOptions& options);

SensitivityMap zero_map(const TensorMap& layout);

/// Elementwise sum; samples_used adds. Throws ContractError when misaligned.
SensitivityMap merge_maps(const SensitivityMap& a, const SensitivityMap& b);

/// SPTTENS1 with "{name}.sens" entries plus "samples_used".
void save_sensitivity(const std::filesystem::path& path, const SensitivityMap& map);
SensitivityMap load_sensitivity(const std::filesystem::path& path);

}  // namespace spt
