// SPDX-License-Identifier: Apache-2.0

#include "spt/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "spt/error.hpp"

namespace spt::container {

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > bytes_.size() - pos_) {
      throw FormatError("SPTTENS1: truncated at byte " + std::to_string(pos_) + " (wanted " +
                        std::to_string(n) + " more)");
    }
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  template <typename T>
  T get_le() {
    auto raw = take(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(raw[i]) << (8 * i));
    return value;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode(const TensorMap& tensors) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    if (tensor.rank() == 0 || tensor.rank() > std::numeric_limits<std::uint8_t>::max()) {
      throw FormatError("SPTTENS1: tensor '" + name + "' has unsupported rank " + std::to_string(tensor.rank()));
    }
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(tensor.rank()));
    for (auto d : tensor.shape()) put_le<std::uint64_t>(out, d);
    for (float v : tensor.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

TensorMap decode(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  auto magic = in.take(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) throw FormatError("SPTTENS1: bad magic");
  const auto count = in.get_le<std::uint32_t>();
  TensorMap out;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = in.get_le<std::uint32_t>();
    auto name_bytes = in.take(name_len);
    std::string name(name_bytes.begin(), name_bytes.end());
    const auto rank = in.get_le<std::uint8_t>();
    if (rank == 0) throw FormatError("SPTTENS1: tensor '" + name + "' has rank 0");
    Shape shape(rank);
    for (auto& d : shape) {
      const auto dim = in.get_le<std::uint64_t>();
      if (dim == 0) throw FormatError("SPTTENS1: tensor '" + name + "' has a zero dimension");
      d = static_cast<std::size_t>(dim);
    }
    std::vector<float> data(element_count(shape));
    for (auto& v : data) v = std::bit_cast<float>(in.get_le<std::uint32_t>());
    out.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!in.done()) throw FormatError("SPTTENS1: trailing bytes after last tensor");
  return out;
}

void write(const std::filesystem::path& path, const TensorMap& tensors) {
  const auto bytes = encode(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write to '" + path.string() + "' failed");
}

TensorMap read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

}  // namespace spt::container
