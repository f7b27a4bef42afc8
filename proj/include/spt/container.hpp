// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "spt/tensor_map.hpp"

namespace spt::container {

/// Portable tensor container ("SPTTENS1").
///
/// Layout, all integers little-endian:
///   8 bytes  magic "SPTTENS1"
///   u32      tensor count
///   per tensor:
///     u32 name length, UTF-8 name bytes,
///     u8 rank, rank x u64 dims,
///     f32 data in row-major order.
inline constexpr char kMagic[8] = {'S', 'P', 'T', 'T', 'E', 'N', 'S', '1'};

std::vector<std::uint8_t> encode(const TensorMap& tensors);
TensorMap decode(std::span<const std::uint8_t> bytes);

void write(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap read(const std::filesystem::path& path);

}  // namespace spt::container
