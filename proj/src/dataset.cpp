// SPDX-License-Identifier: Apache-2.0

#include "spt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "spt/container.hpp"
#include "spt/error.hpp"

namespace spt {

void Dataset::validate(std::size_t classes) const {
  if (features.rank() != 3) throw ContractError("dataset features must be [n x seq x dim], got " + to_string(features.shape()));
  if (features.shape()[0] != labels.size()) {
    throw ContractError("dataset has " + std::to_string(features.shape()[0]) + " feature rows but " +
                        std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw ContractError("label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                          " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

Dataset Dataset::gather(std::span<const std::size_t> indices) const {
  const std::size_t row = features.size() / features.shape()[0];
  Dataset out;
  out.task_id = task_id;
  out.features = Tensor({indices.size(), features.shape()[1], features.shape()[2]});
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= size()) throw IndexError("sample index " + std::to_string(src) + " out of range");
    std::memcpy(out.features.data() + i * row, features.data() + src * row, row * sizeof(float));
    out.labels.push_back(labels[src]);
  }
  return out;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > size()) {
    throw IndexError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                     std::to_string(size()) + " samples");
  }
  std::vector<std::size_t> idx(end - begin);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
  return gather(idx);
}

Tensor Dataset::flat_features() const {
  return features.reshaped({features.shape()[0], features.shape()[1] * features.shape()[2]});
}

TensorMap to_tensors(const Dataset& data) {
  TensorMap out;
  out.add("features", data.features);
  Tensor labels({data.labels.size()});
  for (std::size_t i = 0; i < data.labels.size(); ++i) labels[i] = static_cast<float>(data.labels[i]);
  out.add("labels", std::move(labels));
  out.add("task", Tensor::scalar(static_cast<float>(data.task_id)));
  return out;
}

Dataset dataset_from_tensors(const TensorMap& tensors) {
  Dataset data;
  data.features = tensors.at("features");
  const Tensor& labels = tensors.at("labels");
  data.labels.reserve(labels.size());
  for (float v : labels.values()) {
    if (v < 0.0F || v != std::floor(v)) throw FormatError("dataset label " + std::to_string(v) + " is not a class index");
    data.labels.push_back(static_cast<int>(v));
  }
  if (tensors.contains("task")) data.task_id = static_cast<int>(tensors.at("task")[0]);
  if (data.features.rank() != 3 || data.features.shape()[0] != data.labels.size()) {
    throw FormatError("dataset features " + to_string(data.features.shape()) + " do not match " +
                      std::to_string(data.labels.size()) + " labels");
  }
  return data;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) { container::write(path, to_tensors(data)); }

Dataset load_dataset(const std::filesystem::path& path) { return dataset_from_tensors(container::read(path)); }

}  // namespace spt
