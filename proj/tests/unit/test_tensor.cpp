// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "spt/container.hpp"
#include "spt/error.hpp"
#include "spt/mask.hpp"
#include "spt/random.hpp"
#include "spt/tensor.hpp"
#include "spt/tensor_map.hpp"

using namespace spt;

TEST_CASE("tensor shape and data agree") {
  Tensor t({2, 3}, 1.5F);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 1.5F);
  CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS((void)t.reshaped({4, 2}), DimensionError);
}

TEST_CASE("matrix literal is row-major") {
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(m.shape() == Shape{2, 2});
  CHECK(m[1] == 2.0F);
  CHECK(m[2] == 3.0F);
}

TEST_CASE("tensor map keeps insertion order and unique names") {
  TensorMap map;
  map.add("b", Tensor({2}));
  map.add("a", Tensor({3}));
  CHECK(map.names() == std::vector<std::string>{"b", "a"});
  CHECK(map.total_elements() == 5);
  CHECK(map.index_of("a") == 1);
  CHECK_THROWS_AS(map.add("a", Tensor({1})), ContractError);
}

TEST_CASE("container round trip is bit exact") {
  TensorMap map;
  Rng rng(3);
  Tensor w({3, 4});
  fill_truncated_normal(w, rng, 1.0F);
  map.add("block0.q", w);
  map.add("scalar", Tensor::scalar(-0.0F));
  Tensor cube({2, 1, 3});
  cube[5] = 7.25F;
  map.add("cube", cube);

  const auto bytes = container::encode(map);
  CHECK(std::memcmp(bytes.data(), "SPTTENS1", 8) == 0);
  const TensorMap back = container::decode(bytes);
  CHECK(bit_equal(map, back));
  CHECK(back.entry(2).second.shape() == Shape{2, 1, 3});

  const auto path = std::filesystem::temp_directory_path() / "spt_container_test.spt";
  container::write(path, map);
  CHECK(bit_equal(container::read(path), map));
  std::filesystem::remove(path);
}

TEST_CASE("container layout matches the documented byte format") {
  TensorMap map;
  map.add("w", Tensor({2}, std::vector<float>{1.0F, -2.0F}));
  const auto b = container::encode(map);
  // magic, u32 count, u32 name length, name, u8 rank, u64 dim, 2 x f32
  REQUIRE(b.size() == 8 + 4 + 4 + 1 + 1 + 8 + 8);
  CHECK(b[8] == 1);
  CHECK(b[12] == 1);
  CHECK(b[16] == 'w');
  CHECK(b[17] == 1);
  CHECK(b[18] == 2);
  float second = 0.0F;
  std::memcpy(&second, b.data() + 30, 4);
  CHECK(second == -2.0F);
}

TEST_CASE("container rejects malformed input") {
  TensorMap map;
  map.add("w", Tensor({2, 2}, 1.0F));
  auto bytes = container::encode(map);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(container::decode(truncated), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(container::decode(trailing), FormatError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(container::decode(bad_magic), FormatError);
}

TEST_CASE("mask tracks popcount and round trips through tensors") {
  Mask m({2, 2});
  m.set(1);
  m.set(1);
  m.set(3);
  CHECK(m.popcount() == 2);
  m.set(3, false);
  CHECK(m.popcount() == 1);
  CHECK_THROWS_AS(m.set(4), IndexError);
  const Tensor t = m.to_tensor();
  CHECK(t[1] == 1.0F);
  CHECK(Mask::from_tensor(t) == m);
  CHECK_THROWS_AS(Mask::from_tensor(Tensor({2}, 0.5F)), FormatError);
}

TEST_CASE("truncated normal stays within two standard deviations") {
  Rng rng(11);
  for (int i = 0; i < 10000; ++i) {
    const float v = truncated_normal(rng, 0.02F);
    REQUIRE(std::abs(v) <= 0.04F);
  }
}
