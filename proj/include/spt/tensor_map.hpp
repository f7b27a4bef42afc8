// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "spt/tensor.hpp"

namespace spt {

using NamedTensor = std::pair<std::string, Tensor>;

/// Insertion-ordered name -> Tensor map with unique names.
class TensorMap {
 public:
  TensorMap() = default;
  explicit TensorMap(std::vector<NamedTensor> entries);

  /// Throws ContractError on a duplicate name.
  Tensor& add(std::string name, Tensor tensor);

  bool contains(std::string_view name) const;
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  /// Position in iteration order; throws ConfigError when absent.
  std::size_t index_of(std::string_view name) const;

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  /// Sum of element counts over every entry.
  std::size_t total_elements() const;

  NamedTensor& entry(std::size_t i) { return entries_[i]; }
  const NamedTensor& entry(std::size_t i) const { return entries_[i]; }
  std::vector<std::string> names() const;

  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  const std::vector<NamedTensor>& entries() const noexcept { return entries_; }

 private:
  std::vector<NamedTensor> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Same names in the same order with the same shapes.
bool same_layout(const TensorMap& a, const TensorMap& b);

/// Every tensor bit-identical.
bool bit_equal(const TensorMap& a, const TensorMap& b);

/// The model's weights, keyed by registry name ("block0.q", "head", ...).
class ParameterStore : public TensorMap {
 public:
  using TensorMap::TensorMap;
};

}  // namespace spt
