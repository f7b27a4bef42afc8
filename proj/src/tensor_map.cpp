// SPDX-License-Identifier: Apache-2.0

#include "spt/tensor_map.hpp"

#include "spt/error.hpp"

namespace spt {

TensorMap::TensorMap(std::vector<NamedTensor> entries) {
  for (auto& [name, tensor] : entries) add(std::move(name), std::move(tensor));
}

Tensor& TensorMap::add(std::string name, Tensor tensor) {
  if (index_.contains(name)) throw ContractError("duplicate tensor name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(tensor));
  return entries_.back().second;
}

bool TensorMap::contains(std::string_view name) const { return index_.contains(std::string(name)); }

std::size_t TensorMap::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("no tensor named '" + std::string(name) + "'");
  return it->second;
}

Tensor& TensorMap::at(std::string_view name) { return entries_[index_of(name)].second; }

const Tensor& TensorMap::at(std::string_view name) const { return entries_[index_of(name)].second; }

std::size_t TensorMap::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

std::vector<std::string> TensorMap::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, t] : entries_) out.push_back(name);
  return out;
}

bool same_layout(const TensorMap& a, const TensorMap& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.entry(i).first != b.entry(i).first || a.entry(i).second.shape() != b.entry(i).second.shape()) {
      return false;
    }
  }
  return true;
}

bool bit_equal(const TensorMap& a, const TensorMap& b) {
  if (!same_layout(a, b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!bit_equal(a.entry(i).second, b.entry(i).second)) return false;
  }
  return true;
}

}  // namespace spt
