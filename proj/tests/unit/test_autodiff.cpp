// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "spt/autodiff.hpp"
#include "spt/error.hpp"
#include "spt/model.hpp"

using namespace spt;

TEST_CASE("matmul examples") {
  const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor b = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(bit_equal(matmul(eye, b), b));
  CHECK(matmul(Tensor::matrix({{1, 0}}), Tensor::matrix({{2}, {5}}))[0] == 2.0F);
  try {
    (void)matmul(Tensor({2, 3}), Tensor({2, 3}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("gradient of sum(A*B) w.r.t. A") {
  Tape tape;
  Var a = tape.leaf(Tensor::matrix({{1, 1}, {1, 1}}), true);
  Var b = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  const auto g = tape.backward(tape.sum(tape.matmul(a, b)));
  const Tensor& ga = g[a];
  CHECK(ga[0] == doctest::Approx(3));
  CHECK(ga[1] == doctest::Approx(7));
  CHECK(ga[2] == doctest::Approx(3));
  CHECK(ga[3] == doctest::Approx(7));
}

TEST_CASE("elementwise examples") {
  Tape tape;
  const Tensor r = tape.value(tape.relu(tape.constant(Tensor::vector({-1, 0, 2}))));
  CHECK(r[0] == 0.0F);
  CHECK(r[1] == 0.0F);
  CHECK(r[2] == 2.0F);
  const Tensor s = tape.value(tape.softmax_rows(tape.constant(Tensor::matrix({{0, 0}}))));
  CHECK(s[0] == doctest::Approx(0.5));
  const std::vector<int> label{0};
  const float ce = tape.value(tape.cross_entropy(tape.constant(Tensor::matrix({{0, 0}})), label))[0];
  CHECK(ce == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  const std::vector<int> bad{2};
  CHECK_THROWS_AS(tape.cross_entropy(tape.constant(Tensor::matrix({{0, 0}})), bad), IndexError);
}

TEST_CASE("relu subgradient at zero is zero") {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({0.0F}), true);
  CHECK(tape.backward(tape.sum(tape.relu(x)))[x][0] == 0.0F);
}

TEST_CASE("scalar loss gradients") {
  // loss = 0.5 * (w - 1)^2 at w = 0
  Tape tape;
  Var w = tape.leaf(Tensor::scalar(0.0F), true);
  Var d = tape.add(w, tape.constant(Tensor::scalar(-1.0F)));
  Var loss = tape.scale(tape.mul(d, d), 0.5F);
  CHECK(tape.backward(loss)[w][0] == doctest::Approx(-1.0));

  Tape t2;
  Var unused = t2.leaf(Tensor::scalar(3.0F), true);
  Var other = t2.leaf(Tensor::scalar(2.0F), true);
  const auto g = t2.backward(t2.mul(other, other));
  CHECK(g[unused][0] == 0.0F);
  CHECK(g[other][0] == doctest::Approx(4.0));
}

TEST_CASE("non-scalar loss is a contract error") {
  Tape tape;
  Var x = tape.leaf(Tensor({2, 2}), true);
  CHECK_THROWS_AS((void)tape.backward(x), ContractError);
}

TEST_CASE("tape is topological and backward visits each node once") {
  Tape tape;
  Var a = tape.leaf(Tensor::matrix({{1, 2}}), true);
  Var b = tape.leaf(Tensor::matrix({{3}, {4}}), true);
  Var c = tape.matmul(a, b);
  Var loss = tape.sum(tape.add(c, c));
  const auto g = tape.backward(loss);
  CHECK(g.visited_nodes() == tape.size());
  CHECK(g[a][0] == doctest::Approx(6.0));
}

TEST_CASE("softmax rows sum to one and layer norm standardizes") {
  Rng rng(5);
  std::normal_distribution<float> n(0.0F, 3.0F);
  Tensor x({8, 7});
  for (auto& v : x.values()) v = n(rng);
  Tape tape;
  Var vx = tape.constant(x);
  const Tensor s = tape.value(tape.softmax_rows(vx));
  for (std::size_t r = 0; r < 8; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 7; ++c) sum += s.at(r, c);
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
  const Tensor ln = tape.value(tape.layer_norm(vx, tape.constant(Tensor({7}, 1.0F)), tape.constant(Tensor({7}))));
  for (std::size_t r = 0; r < 8; ++r) {
    double mean = 0.0;
    double var = 0.0;
    for (std::size_t c = 0; c < 7; ++c) mean += ln.at(r, c);
    mean /= 7.0;
    for (std::size_t c = 0; c < 7; ++c) var += (ln.at(r, c) - mean) * (ln.at(r, c) - mean);
    var /= 7.0;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("every op matches finite differences of a double reference") {
  Rng rng(20260101);
  for (const auto& op : oracle::gradient_cases()) {
    const double tol = op.name == "gelu" ? 3e-3 : 1e-3;
    double worst = 0.0;
    for (int point = 0; point < 20; ++point) worst = std::max(worst, oracle::gradcheck(op, rng).max_normwise);
    INFO(op.name);
    CHECK(worst < tol);
  }
}

TEST_CASE("three-layer MLP gradients match finite differences") {
  ModelConfig cfg;
  cfg.variant = Variant::mlp;
  cfg.depth = 1;
  cfg.seq = 2;
  cfg.input_dim = 3;
  cfg.width = 4;
  cfg.mlp_ratio = 2;
  cfg.num_classes = 3;
  ParameterStore params = build_model(cfg, 9);
  // Larger weights than the default init so every gradient is well away from zero.
  Rng rng(4);
  std::normal_distribution<float> n(0.0F, 0.7F);
  for (auto& [name, t] : params) {
    for (auto& v : t.values()) v = n(rng);
  }
  Dataset data;
  data.features = Tensor({5, 2, 3});
  for (auto& v : data.features.values()) v = n(rng);
  data.labels = {0, 2, 1, 1, 0};

  Tape tape;
  ForwardGraph g = forward(tape, cfg, params, data.features, {}, GradPolicy::all_params(params));
  const auto grads = tape.backward(tape.cross_entropy(g.logits, data.labels));

  oracle::Params p = oracle::widen(params);
  double worst = 0.0;
  for (std::size_t t = 0; t < p.size(); ++t) {
    double scale = 0.0;
    std::vector<double> fd(p[t].size());
    for (std::size_t i = 0; i < p[t].size(); ++i) {
      const double saved = p[t][i];
      p[t][i] = saved + 1e-3;
      const double up = oracle::mlp_loss(cfg, p, data, 0, 5);
      p[t][i] = saved - 1e-3;
      const double down = oracle::mlp_loss(cfg, p, data, 0, 5);
      p[t][i] = saved;
      fd[i] = (up - down) / 2e-3;
      scale = std::max(scale, std::abs(fd[i]));
    }
    for (std::size_t i = 0; i < fd.size(); ++i) {
      worst = std::max(worst, std::abs(grads[g.params[t]][i] - fd[i]) / (scale + 1e-8));
    }
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("forward values and gradients are deterministic") {
  auto run = [] {
    Rng rng(77);
    Tensor a({4, 6});
    Tensor b({6, 3});
    fill_truncated_normal(a, rng, 1.0F);
    fill_truncated_normal(b, rng, 1.0F);
    Tape tape;
    Var va = tape.leaf(a, true);
    Var vb = tape.leaf(b, true);
    Var loss = tape.sum(tape.gelu(tape.matmul(va, vb)));
    auto g = tape.backward(loss);
    return std::make_pair(g.take(va), g.take(vb));
  };
  const auto first = run();
  const auto second = run();
  CHECK(bit_equal(first.first, second.first));
  CHECK(bit_equal(first.second, second.second));
}
