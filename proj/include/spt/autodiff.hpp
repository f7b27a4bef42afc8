// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "spt/tensor.hpp"

namespace spt {

/// Handle to a value recorded on a Tape.
struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const noexcept { return id != std::numeric_limits<std::uint32_t>::max(); }
};

enum class OpKind : std::uint8_t {
  leaf,
  matmul,
  add,
  add_bias,
  mul,
  scale,
  relu,
  gelu,
  softmax_rows,
  layer_norm,
  cross_entropy,
  attention,
  mean_pool,
  sum,
  reshape,
};

const char* op_name(OpKind op) noexcept;

/// Gradients of the leaves that were marked requires_grad, indexed by Var.
class GradientSnapshot {
 public:
  bool has(Var v) const { return v.id < grads_.size() && !grads_[v.id].empty(); }
  const Tensor& operator[](Var v) const;
  Tensor take(Var v);
  std::size_t visited_nodes() const noexcept { return visited_; }

 private:
  friend class Tape;
  std::vector<Tensor> grads_;
  std::size_t visited_ = 0;
};

/// Reverse-mode record of tensor operations.
///
/// Nodes are appended in execution order, so every node's inputs precede it.
/// Only nodes with at least one requires_grad input carry gradient; backward
/// skips the rest. Values are immutable once recorded.
class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  OpKind op(Var v) const { return node(v).op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// a[m x k] * b[k x n].
  Var matmul(Var a, Var b);
  /// Elementwise; shapes must match exactly.
  Var add(Var a, Var b);
  /// Adds bias[c] to every row of a[r x c].
  Var add_bias(Var a, Var bias);
  Var mul(Var a, Var b);
  Var scale(Var a, float factor);
  /// Subgradient at 0 is 0.
  Var relu(Var a);
  /// tanh approximation.
  Var gelu(Var a);
  Var softmax_rows(Var a);
  /// Row-wise normalization (eps 1e-5) followed by gamma * x + beta.
  Var layer_norm(Var a, Var gamma, Var beta);
  /// Mean negative log-softmax of the true class over the rows of logits.
  Var cross_entropy(Var logits, std::span<const int> labels);
  /// Multi-head scaled dot-product attention over q, k, v of shape
  /// [batch*seq x width]; heads split the width evenly.
  Var attention(Var q, Var k, Var v, std::size_t batch, std::size_t seq, std::size_t heads);
  /// Averages each group of `seq` consecutive rows: [batch*seq x d] -> [batch x d].
  Var mean_pool(Var a, std::size_t batch, std::size_t seq);
  Var sum(Var a);
  Var reshape(Var a, Shape shape);

  /// Gradients of a scalar `loss` with respect to every requires_grad leaf.
  /// Leaves with no path to the loss get zeros.
  GradientSnapshot backward(Var loss) const;

 private:
  struct Node {
    OpKind op = OpKind::leaf;
    std::array<std::uint32_t, 3> inputs{};
    std::uint8_t input_count = 0;
    bool requires_grad = false;
    Tensor value;
    Tensor saved;
    std::vector<int> labels;
    float factor = 1.0F;
    std::array<std::size_t, 3> dims{};
  };

  const Node& node(Var v) const;
  Var push(Node n, std::initializer_list<Var> inputs);
  void backward_node(const Node& n, const Tensor& grad, std::vector<Tensor>& grads) const;

  std::vector<Node> nodes_;
};

/// Dense kernels shared by the tape and by tape-free helpers.
namespace kernels {

/// c[m x n] (+)= a[m x k] * b[k x n]
void matmul(std::span<const float> a, std::span<const float> b, std::span<float> c, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate);
/// c[m x k] += a[m x n] * b[k x n]^T
void matmul_nt_acc(std::span<const float> a, std::span<const float> b, std::span<float> c, std::size_t m,
                   std::size_t n, std::size_t k);
/// c[k x n] += a[m x k]^T * b[m x n]
void matmul_tn_acc(std::span<const float> a, std::span<const float> b, std::span<float> c, std::size_t m,
                   std::size_t k, std::size_t n);

}  // namespace kernels

/// Plain (tape-free) matrix product with shape checking.
Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace spt
