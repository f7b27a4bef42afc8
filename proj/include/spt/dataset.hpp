// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "spt/tensor.hpp"
#include "spt/tensor_map.hpp"

namespace spt {

/// Labelled feature sequences: features [n x seq x dim], one label per sample.
struct Dataset {
  Tensor features;
  std::vector<int> labels;
  int task_id = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t seq() const { return features.shape()[1]; }
  std::size_t dim() const { return features.shape()[2]; }

  /// Throws ContractError when shapes disagree or a label is outside [0, classes).
  void validate(std::size_t classes) const;

  /// Rows `indices` as a new dataset.
  Dataset gather(std::span<const std::size_t> indices) const;
  /// Rows [begin, end).
  Dataset slice(std::size_t begin, std::size_t end) const;

  /// Features flattened to [n x seq*dim].
  Tensor flat_features() const;
};

/// SPTTENS1 form: "features", "labels" (as floats), "task" ([1]).
TensorMap to_tensors(const Dataset& data);
Dataset dataset_from_tensors(const TensorMap& tensors);

void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace spt
