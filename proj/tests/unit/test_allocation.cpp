// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "spt/allocation.hpp"
#include "spt/container.hpp"
#include "spt/error.hpp"

using namespace spt;

namespace {

SensitivityMap map_of(std::initializer_list<std::pair<std::string, Tensor>> entries) {
  SensitivityMap m;
  for (const auto& [name, t] : entries) m.scores.add(name, t);
  m.samples_used = 1;
  return m;
}

/// A 4x4 block matrix with `hot` connections scoring 1, plus a head.
SensitivityMap one_matrix(std::size_t hot) {
  Tensor q({4, 4});
  for (std::size_t i = 0; i < hot; ++i) q[i] = 1.0F;
  return map_of({{"block0.q", q}, {"head", Tensor({4, 2}, 5.0F)}});
}

TensorMap small_layout() {
  ModelConfig c;
  c.depth = 2;
  c.width = 8;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.num_classes = 3;
  c.seq = 2;
  c.input_dim = 4;
  return build_model(c, 0);
}

}  // namespace

TEST_CASE("top-tau examples") {
  const auto m = map_of({{"w", Tensor::vector({0.9F, 0.1F, 0.5F})}});
  const auto t = select_top_tau(m, 2, {});
  REQUIRE(t.size() == 2);
  CHECK(t[0] == Connection{0, 0});
  CHECK(t[1] == Connection{0, 2});

  // Registry order b, a: the tie goes to the lexicographically first name.
  const auto ties = map_of({{"b", Tensor({2}, 1.0F)}, {"a", Tensor({2}, 1.0F)}});
  CHECK(select_top_tau(ties, 1, {}) == std::vector<Connection>{{1, 0}});
  CHECK(select_top_tau(ties, 3, {}) == std::vector<Connection>{{0, 0}, {1, 0}, {1, 1}});

  CHECK_THROWS_AS(select_top_tau(m, 4, {}), ArgumentError);
  CHECK_THROWS_AS(select_top_tau(m, 0, {}), ArgumentError);
  CHECK_THROWS_AS(select_top_tau(ties, 3, {"a"}), ArgumentError);
}

TEST_CASE("top-tau agrees with a full sort") {
  Rng rng(42);
  std::uniform_int_distribution<int> coarse(0, 20);
  std::uniform_real_distribution<float> fine(0.0F, 1.0F);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor a({600});
    Tensor b({400});
    // Half the trials use coarse values so ties are common.
    for (auto* t : {&a, &b}) {
      for (auto& v : t->values()) v = trial % 2 == 0 ? fine(rng) : static_cast<float>(coarse(rng));
    }
    const auto m = map_of({{"z", a}, {"y", b}});
    CHECK(select_top_tau(m, 50, {}) == oracle::top_tau_full_sort(m, 50, {}));
  }
}

TEST_CASE("masks") {
  const TensorMap layout = map_of({{"W", Tensor({2, 2})}}).scores;
  const auto masks = build_masks({{0, 1}}, layout);
  CHECK(masks.at("W").to_tensor().values()[1] == 1.0F);
  CHECK(masks.at("W").popcount() == 1);
  CHECK(build_masks({}, layout).at("W").popcount() == 0);

  Rng rng(3);
  const TensorMap big = small_layout();
  for (int trial = 0; trial < 20; ++trial) {
    const SensitivityMap m = fixture::random_map(big, rng);
    const auto t = select_top_tau(m, 100, {});
    std::size_t total = 0;
    for (const auto& [name, mask] : build_masks(t, big)) total += mask.popcount();
    CHECK(total == t.size());
  }
}

TEST_CASE("sigma examples") {
  CHECK(sigma_for(ModuleKind::lora, 4, 4, 1, SigmaPolicy::module_param_count) == 8);
  CHECK(sigma_for(ModuleKind::lora, 4, 4, 1, SigmaPolicy::paper_formula) == 32);
  CHECK(sigma_for(ModuleKind::adapter, 8, 8, 2, SigmaPolicy::module_param_count) == 42);
  CHECK(sigma_for(ModuleKind::adapter, 3, 8, 2, SigmaPolicy::module_param_count) == 42);
}

TEST_CASE("gating examples") {
  PlanOptions o;
  o.structured = StructuredKind::lora;
  o.rank = 1;
  const AllocationPlan nine = make_plan(one_matrix(9), 9, o);
  CHECK(nine.at("block0.q").verdict == Verdict::structured);
  CHECK(nine.at("block0.q").trainable == 8);
  CHECK(nine.always_trainable == std::vector<std::string>{"head"});
  CHECK(nine.head_params == 8);

  const AllocationPlan seven = make_plan(one_matrix(7), 7, o);
  CHECK(seven.at("block0.q").verdict == Verdict::unstructured);
  CHECK(seven.at("block0.q").mask.popcount() == 7);

  o.sigma_policy = SigmaPolicy::paper_formula;
  const AllocationPlan literal = make_plan(one_matrix(16), 16, o);
  CHECK(literal.at("block0.q").verdict == Verdict::unstructured);
  CHECK(literal.at("block0.q").sigma == 32);
  CHECK_FALSE(literal.warnings.empty());

  o.sigma_policy = SigmaPolicy::module_param_count;
  o.allow_unstructured = false;
  CHECK(make_plan(one_matrix(7), 7, o).at("block0.q").verdict == Verdict::frozen);

  o.allow_unstructured = true;
  o.rank = 3;  // above min(4, 4) / 2
  const AllocationPlan too_big = make_plan(one_matrix(16), 16, o);
  CHECK(too_big.at("block0.q").verdict == Verdict::unstructured);
  CHECK_FALSE(too_big.warnings.empty());
}

TEST_CASE("non-matrix tensors are never structured") {
  const TensorMap layout = small_layout();
  SensitivityMap m = zero_map(layout);
  for (auto& [name, t] : m.scores) {
    if (name == "embed" || name.find("ln1") != std::string::npos || name.ends_with(".bias")) t.fill(1.0F);
  }
  PlanOptions o;
  o.rank = 1;
  const std::size_t tau = eligible_count(m, default_exclusions(layout, false));
  const AllocationPlan plan = make_plan(m, tau, o);
  for (const auto& t : plan.tensors) {
    if (!is_structured_eligible(t.name, t.shape)) CHECK(t.verdict != Verdict::structured);
  }
  CHECK(plan.at("embed").verdict == Verdict::unstructured);
  CHECK(plan.at("embed").trainable == layout.at("embed").size());
}

TEST_CASE("plan properties on random maps") {
  const TensorMap layout = small_layout();
  Rng rng(17);
  std::uniform_int_distribution<std::size_t> rank(1, 4);
  std::size_t structured = 0;
  std::size_t unstructured = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const SensitivityMap m = fixture::random_map(layout, rng);
    PlanOptions o;
    o.rank = rank(rng);
    o.structured = trial % 3 == 0 ? StructuredKind::adapter : StructuredKind::lora;
    const auto excl = default_exclusions(layout, false);
    std::uniform_int_distribution<std::size_t> pick(1, eligible_count(m, excl));
    const std::size_t tau = pick(rng);
    const AllocationPlan plan = make_plan(m, tau, o);
    structured += plan.count(Verdict::structured);
    unstructured += plan.count(Verdict::unstructured);

    // Budget safety.
    CHECK(plan.total_trainable() <= tau);
    for (const auto& t : plan.tensors) {
      if (t.verdict == Verdict::structured) CHECK(t.trainable <= t.sensitive);
    }
    // Every non-head tensor appears exactly once.
    CHECK(plan.tensors.size() + plan.always_trainable.size() == layout.size());

    // Gating against an independent recount.
    const auto expected =
        oracle::expected_verdicts(layout, oracle::top_tau_full_sort(m, tau, excl), o.structured == StructuredKind::adapter, o.rank);
    for (const auto& t : plan.tensors) CHECK(t.verdict == expected.at(t.name));

    // Determinism, scale invariance.
    CHECK(plan_to_json(make_plan(m, tau, o)) == plan_to_json(plan));
    SensitivityMap scaled = m;
    for (auto& [name, t] : scaled.scores) {
      for (auto& v : t.values()) v *= 4.0F;
    }
    const AllocationPlan again = make_plan(scaled, tau, o);
    CHECK(plan_to_json(again) == plan_to_json(plan));
    for (std::size_t i = 0; i < plan.tensors.size(); ++i) CHECK(again.tensors[i].mask == plan.tensors[i].mask);

    // Monotonicity in tau.
    const std::size_t more = std::min(tau + tau / 2 + 1, eligible_count(m, excl));
    const AllocationPlan bigger = make_plan(m, more, o);
    for (std::size_t i = 0; i < plan.tensors.size(); ++i) {
      if (plan.tensors[i].verdict == Verdict::structured) CHECK(bigger.tensors[i].verdict == Verdict::structured);
    }
  }
  // The draws must exercise both branches of the gate.
  CHECK(structured > 20);
  CHECK(unstructured > 20);
}

TEST_CASE("budget strings") {
  CHECK(resolve_budget("0.005", 10000, 9000) == 50);
  CHECK(resolve_budget("120", 10000, 9000) == 120);
  CHECK(resolve_budget("1.0", 10000, 9000) == 9000);
  CHECK(resolve_budget("1e-4", 10000, 9000) == 1);
  CHECK(resolve_budget("0.00001", 10000, 9000) == 1);
  CHECK_THROWS_AS(resolve_budget("1.5", 10000, 9000), ArgumentError);
  CHECK_THROWS_AS(resolve_budget("abc", 10000, 9000), ArgumentError);
  CHECK_THROWS_AS(resolve_budget("12x", 10000, 9000), ArgumentError);
}

TEST_CASE("plans round trip and are checked against the registry") {
  const TensorMap layout = small_layout();
  Rng rng(23);
  const SensitivityMap m = fixture::random_map(layout, rng);
  PlanOptions o;
  o.rank = 1;
  const AllocationPlan plan = make_plan(m, 400, o);
  REQUIRE(plan.count(Verdict::unstructured) > 0);
  const auto path = std::filesystem::temp_directory_path() / "spt_plan_test.json";
  save_plan(path, plan);
  const AllocationPlan back = load_plan(path);
  CHECK(plan_to_json(back) == plan_to_json(plan));
  for (std::size_t i = 0; i < plan.tensors.size(); ++i) CHECK(back.tensors[i].mask == plan.tensors[i].mask);

  // A tampered sidecar is rejected.
  TensorMap masks = container::read(path.string() + ".masks");
  for (auto& [name, t] : masks) {
    if (t.values()[0] == 0.0F) {
      t.values()[0] = 1.0F;
      break;
    }
  }
  container::write(path.string() + ".masks", masks);
  CHECK_THROWS(load_plan(path));
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".masks");

  TensorMap other = layout;
  other.at("block0.q") = Tensor({8, 4});
  CHECK_THROWS_AS(check_plan_matches(plan, other), ConfigError);
}
