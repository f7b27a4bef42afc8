// SPDX-License-Identifier: Apache-2.0

#include "spt/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "spt/error.hpp"

namespace spt {

const char* op_name(OpKind op) noexcept {
  switch (op) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::add_bias: return "add_bias";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::relu: return "relu";
    case OpKind::gelu: return "gelu";
    case OpKind::softmax_rows: return "softmax_rows";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::cross_entropy: return "cross_entropy";
    case OpKind::attention: return "attention";
    case OpKind::mean_pool: return "mean_pool";
    case OpKind::sum: return "sum";
    case OpKind::reshape: return "reshape";
  }
  return "unknown";
}

const Tensor& GradientSnapshot::operator[](Var v) const {
  if (!has(v)) throw ContractError("no gradient recorded for tape value " + std::to_string(v.id));
  return grads_[v.id];
}

Tensor GradientSnapshot::take(Var v) {
  if (!has(v)) throw ContractError("no gradient recorded for tape value " + std::to_string(v.id));
  return std::move(grads_[v.id]);
}

namespace kernels {

void matmul(std::span<const float> a, std::span<const float> b, std::span<float> c, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate) {
  const float* pa = a.data();
  const float* pb = b.data();
  float* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = pc + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0F);
    for (std::size_t p = 0; p < k; ++p) {
      const float av = pa[i * k + p];
      const float* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt_acc(std::span<const float> a, std::span<const float> b, std::span<float> c, std::size_t m,
                   std::size_t n, std::size_t k) {
  const float* pa = a.data();
  const float* pb = b.data();
  float* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = pa + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const float* brow = pb + p * n;
      float acc = 0.0F;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      pc[i * k + p] += acc;
    }
  }
}

void matmul_tn_acc(std::span<const float> a, std::span<const float> b, std::span<float> c, std::size_t m,
                   std::size_t k, std::size_t n) {
  const float* pa = a.data();
  const float* pb = b.data();
  float* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    const float* brow = pb + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = pa[i * k + p];
      float* crow = pc + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul shape mismatch: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  Tensor c({a.shape()[0], b.shape()[1]});
  kernels::matmul(a.values(), b.values(), c.values(), a.shape()[0], a.shape()[1], b.shape()[1], false);
  return c;
}

namespace {

constexpr float kLayerNormEps = 1e-5F;
constexpr float kGeluC = 0.7978845608028654F;  // sqrt(2/pi)
constexpr float kGeluA = 0.044715F;

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw DimensionError(std::string(what) + " expects a matrix, got " + to_string(t.shape()));
}

}  // namespace

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("tape value " + std::to_string(v.id) + " is not on this tape");
  return nodes_[v.id];
}

Var Tape::push(Node n, std::initializer_list<Var> inputs) {
  n.input_count = static_cast<std::uint8_t>(inputs.size());
  std::size_t slot = 0;
  for (Var in : inputs) {
    n.requires_grad = n.requires_grad || node(in).requires_grad;
    n.inputs[slot++] = in.id;
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = OpKind::leaf;
  n.requires_grad = requires_grad;
  value.set_requires_grad(requires_grad);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.rank() != 2 || y.rank() != 2 || x.shape()[1] != y.shape()[0]) {
    throw DimensionError("matmul shape mismatch: " + to_string(x.shape()) + " x " + to_string(y.shape()));
  }
  Node n;
  n.op = OpKind::matmul;
  n.value = spt::matmul(x, y);
  return push(std::move(n), {a, b});
}

Var Tape::add(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.shape() != y.shape()) {
    throw DimensionError("add shape mismatch: " + to_string(x.shape()) + " vs " + to_string(y.shape()));
  }
  Node n;
  n.op = OpKind::add;
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = x[i] + y[i];
  return push(std::move(n), {a, b});
}

Var Tape::add_bias(Var a, Var bias) {
  const Tensor& x = value(a);
  const Tensor& b = value(bias);
  require_matrix(x, "add_bias");
  const std::size_t cols = x.shape()[1];
  if (b.size() != cols || b.rank() != 1) {
    throw DimensionError("add_bias: bias " + to_string(b.shape()) + " does not match rows of " +
                         to_string(x.shape()));
  }
  Node n;
  n.op = OpKind::add_bias;
  n.value = Tensor(x.shape());
  for (std::size_t r = 0; r < x.shape()[0]; ++r) {
    for (std::size_t c = 0; c < cols; ++c) n.value[r * cols + c] = x[r * cols + c] + b[c];
  }
  return push(std::move(n), {a, bias});
}

Var Tape::mul(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.shape() != y.shape()) {
    throw DimensionError("mul shape mismatch: " + to_string(x.shape()) + " vs " + to_string(y.shape()));
  }
  Node n;
  n.op = OpKind::mul;
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = x[i] * y[i];
  return push(std::move(n), {a, b});
}

Var Tape::scale(Var a, float factor) {
  const Tensor& x = value(a);
  Node n;
  n.op = OpKind::scale;
  n.factor = factor;
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = x[i] * factor;
  return push(std::move(n), {a});
}

Var Tape::relu(Var a) {
  const Tensor& x = value(a);
  Node n;
  n.op = OpKind::relu;
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = x[i] > 0.0F ? x[i] : 0.0F;
  return push(std::move(n), {a});
}

Var Tape::gelu(Var a) {
  const Tensor& x = value(a);
  Node n;
  n.op = OpKind::gelu;
  n.value = Tensor(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float v = x[i];
    const float t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
    n.value[i] = 0.5F * v * (1.0F + t);
  }
  return push(std::move(n), {a});
}

Var Tape::softmax_rows(Var a) {
  const Tensor& x = value(a);
  require_matrix(x, "softmax_rows");
  const std::size_t rows = x.shape()[0];
  const std::size_t cols = x.shape()[1];
  Node n;
  n.op = OpKind::softmax_rows;
  n.value = Tensor(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* in = x.data() + r * cols;
    float* out = n.value.data() + r * cols;
    const float peak = *std::max_element(in, in + cols);
    float total = 0.0F;
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] = std::exp(in[c] - peak);
      total += out[c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[c] /= total;
  }
  return push(std::move(n), {a});
}

Var Tape::layer_norm(Var a, Var gamma, Var beta) {
  const Tensor& x = value(a);
  const Tensor& g = value(gamma);
  const Tensor& b = value(beta);
  require_matrix(x, "layer_norm");
  const std::size_t rows = x.shape()[0];
  const std::size_t cols = x.shape()[1];
  if (g.size() != cols || b.size() != cols) {
    throw DimensionError("layer_norm: affine parameters " + to_string(g.shape()) + "/" + to_string(b.shape()) +
                         " do not match " + to_string(x.shape()));
  }
  Node n;
  n.op = OpKind::layer_norm;
  n.dims = {rows, cols, 0};
  n.value = Tensor(x.shape());
  // Row r of `saved` holds xhat[r, :] followed by 1/std of that row.
  n.saved = Tensor({rows, cols + 1});
  for (std::size_t r = 0; r < rows; ++r) {
    const float* in = x.data() + r * cols;
    float mean = 0.0F;
    for (std::size_t c = 0; c < cols; ++c) mean += in[c];
    mean /= static_cast<float>(cols);
    float var = 0.0F;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<float>(cols);
    const float inv = 1.0F / std::sqrt(var + kLayerNormEps);
    float* packed = n.saved.data() + r * (cols + 1);
    packed[cols] = inv;
    for (std::size_t c = 0; c < cols; ++c) {
      packed[c] = (in[c] - mean) * inv;
      n.value[r * cols + c] = packed[c] * g[c] + b[c];
    }
  }
  return push(std::move(n), {a, gamma, beta});
}

Var Tape::cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& x = value(logits);
  require_matrix(x, "cross_entropy");
  const std::size_t rows = x.shape()[0];
  const std::size_t classes = x.shape()[1];
  if (labels.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
  }
  Node n;
  n.op = OpKind::cross_entropy;
  n.labels.assign(labels.begin(), labels.end());
  n.saved = Tensor(x.shape());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw IndexError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
    const float* in = x.data() + r * classes;
    float* prob = n.saved.data() + r * classes;
    const float peak = *std::max_element(in, in + classes);
    float z = 0.0F;
    for (std::size_t c = 0; c < classes; ++c) {
      prob[c] = std::exp(in[c] - peak);
      z += prob[c];
    }
    for (std::size_t c = 0; c < classes; ++c) prob[c] /= z;
    total += static_cast<double>(std::log(z) + peak - in[label]);
  }
  n.value = Tensor::scalar(static_cast<float>(total / static_cast<double>(rows)));
  return push(std::move(n), {logits});
}

Var Tape::attention(Var q, Var k, Var v, std::size_t batch, std::size_t seq, std::size_t heads) {
  const Tensor& tq = value(q);
  const Tensor& tk = value(k);
  const Tensor& tv = value(v);
  require_matrix(tq, "attention");
  if (tk.shape() != tq.shape() || tv.shape() != tq.shape()) {
    throw DimensionError("attention: q/k/v shapes differ: " + to_string(tq.shape()) + ", " +
                         to_string(tk.shape()) + ", " + to_string(tv.shape()));
  }
  const std::size_t width = tq.shape()[1];
  if (batch * seq != tq.shape()[0] || heads == 0 || width % heads != 0) {
    throw DimensionError("attention: " + to_string(tq.shape()) + " incompatible with batch=" +
                         std::to_string(batch) + " seq=" + std::to_string(seq) +
                         " heads=" + std::to_string(heads));
  }
  const std::size_t hd = width / heads;
  const float sc = 1.0F / std::sqrt(static_cast<float>(hd));
  Node n;
  n.op = OpKind::attention;
  n.dims = {batch, seq, heads};
  n.value = Tensor(tq.shape());
  n.saved = Tensor({batch * heads * seq, seq});
  std::vector<float> row(seq);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      float* probs = n.saved.data() + (b * heads + h) * seq * seq;
      for (std::size_t i = 0; i < seq; ++i) {
        const float* qi = tq.data() + (b * seq + i) * width + h * hd;
        float peak = -std::numeric_limits<float>::infinity();
        for (std::size_t j = 0; j < seq; ++j) {
          const float* kj = tk.data() + (b * seq + j) * width + h * hd;
          float dot = 0.0F;
          for (std::size_t c = 0; c < hd; ++c) dot += qi[c] * kj[c];
          row[j] = dot * sc;
          peak = std::max(peak, row[j]);
        }
        float z = 0.0F;
        for (std::size_t j = 0; j < seq; ++j) {
          row[j] = std::exp(row[j] - peak);
          z += row[j];
        }
        float* out = n.value.data() + (b * seq + i) * width + h * hd;
        for (std::size_t j = 0; j < seq; ++j) {
          const float p = row[j] / z;
          probs[i * seq + j] = p;
          const float* vj = tv.data() + (b * seq + j) * width + h * hd;
          for (std::size_t c = 0; c < hd; ++c) out[c] += p * vj[c];
        }
      }
    }
  }
  return push(std::move(n), {q, k, v});
}

Var Tape::mean_pool(Var a, std::size_t batch, std::size_t seq) {
  const Tensor& x = value(a);
  require_matrix(x, "mean_pool");
  if (batch * seq != x.shape()[0]) {
    throw DimensionError("mean_pool: " + to_string(x.shape()) + " is not batch=" + std::to_string(batch) +
                         " x seq=" + std::to_string(seq));
  }
  const std::size_t cols = x.shape()[1];
  Node n;
  n.op = OpKind::mean_pool;
  n.dims = {batch, seq, cols};
  n.value = Tensor({batch, cols});
  const float inv = 1.0F / static_cast<float>(seq);
  for (std::size_t b = 0; b < batch; ++b) {
    float* out = n.value.data() + b * cols;
    for (std::size_t s = 0; s < seq; ++s) {
      const float* in = x.data() + (b * seq + s) * cols;
      for (std::size_t c = 0; c < cols; ++c) out[c] += in[c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[c] *= inv;
  }
  return push(std::move(n), {a});
}

Var Tape::sum(Var a) {
  const Tensor& x = value(a);
  Node n;
  n.op = OpKind::sum;
  double total = 0.0;
  for (float v : x.values()) total += v;
  n.value = Tensor::scalar(static_cast<float>(total));
  return push(std::move(n), {a});
}

Var Tape::reshape(Var a, Shape shape) {
  Node n;
  n.op = OpKind::reshape;
  n.value = value(a).reshaped(std::move(shape));
  n.value.set_requires_grad(false);
  return push(std::move(n), {a});
}

namespace {

Tensor& grad_slot(std::vector<Tensor>& grads, std::uint32_t id, const Shape& shape) {
  Tensor& g = grads[id];
  if (g.empty()) g = Tensor(shape);
  return g;
}

}  // namespace

void Tape::backward_node(const Node& n, const Tensor& grad, std::vector<Tensor>& grads) const {
  auto wants = [&](std::size_t slot) { return nodes_[n.inputs[slot]].requires_grad; };
  auto input = [&](std::size_t slot) -> const Tensor& { return nodes_[n.inputs[slot]].value; };
  auto slot = [&](std::size_t s) -> Tensor& {
    return grad_slot(grads, n.inputs[s], nodes_[n.inputs[s]].value.shape());
  };

  switch (n.op) {
    case OpKind::leaf:
      return;
    case OpKind::matmul: {
      const Tensor& a = input(0);
      const Tensor& b = input(1);
      const std::size_t m = a.shape()[0];
      const std::size_t k = a.shape()[1];
      const std::size_t cols = b.shape()[1];
      if (wants(0)) kernels::matmul_nt_acc(grad.values(), b.values(), slot(0).values(), m, cols, k);
      if (wants(1)) kernels::matmul_tn_acc(a.values(), grad.values(), slot(1).values(), m, k, cols);
      return;
    }
    case OpKind::add: {
      for (std::size_t s = 0; s < 2; ++s) {
        if (!wants(s)) continue;
        Tensor& g = slot(s);
        for (std::size_t i = 0; i < grad.size(); ++i) g[i] += grad[i];
      }
      return;
    }
    case OpKind::add_bias: {
      const std::size_t rows = grad.shape()[0];
      const std::size_t cols = grad.shape()[1];
      if (wants(0)) {
        Tensor& g = slot(0);
        for (std::size_t i = 0; i < grad.size(); ++i) g[i] += grad[i];
      }
      if (wants(1)) {
        Tensor& g = slot(1);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) g[c] += grad[r * cols + c];
        }
      }
      return;
    }
    case OpKind::mul: {
      const Tensor& a = input(0);
      const Tensor& b = input(1);
      if (wants(0)) {
        Tensor& g = slot(0);
        for (std::size_t i = 0; i < grad.size(); ++i) g[i] += grad[i] * b[i];
      }
      if (wants(1)) {
        Tensor& g = slot(1);
        for (std::size_t i = 0; i < grad.size(); ++i) g[i] += grad[i] * a[i];
      }
      return;
    }
    case OpKind::scale: {
      Tensor& g = slot(0);
      for (std::size_t i = 0; i < grad.size(); ++i) g[i] += grad[i] * n.factor;
      return;
    }
    case OpKind::relu: {
      const Tensor& x = input(0);
      Tensor& g = slot(0);
      for (std::size_t i = 0; i < grad.size(); ++i) {
        if (x[i] > 0.0F) g[i] += grad[i];
      }
      return;
    }
    case OpKind::gelu: {
      const Tensor& x = input(0);
      Tensor& g = slot(0);
      for (std::size_t i = 0; i < grad.size(); ++i) {
        const float v = x[i];
        const float t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        const float dt = (1.0F - t * t) * kGeluC * (1.0F + 3.0F * kGeluA * v * v);
        g[i] += grad[i] * (0.5F * (1.0F + t) + 0.5F * v * dt);
      }
      return;
    }
    case OpKind::softmax_rows: {
      const Tensor& y = n.value;
      const std::size_t rows = y.shape()[0];
      const std::size_t cols = y.shape()[1];
      Tensor& g = slot(0);
      for (std::size_t r = 0; r < rows; ++r) {
        float dot = 0.0F;
        for (std::size_t c = 0; c < cols; ++c) dot += grad[r * cols + c] * y[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += y[r * cols + c] * (grad[r * cols + c] - dot);
      }
      return;
    }
    case OpKind::layer_norm: {
      const std::size_t rows = n.dims[0];
      const std::size_t cols = n.dims[1];
      const Tensor& gamma = input(1);
      const auto xhat = [&](std::size_t r, std::size_t c) { return n.saved[r * (cols + 1) + c]; };
      if (wants(1)) {
        Tensor& g = slot(1);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) g[c] += grad[r * cols + c] * xhat(r, c);
        }
      }
      if (wants(2)) {
        Tensor& g = slot(2);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) g[c] += grad[r * cols + c];
        }
      }
      if (wants(0)) {
        Tensor& g = slot(0);
        const float inv_n = 1.0F / static_cast<float>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const float rstd = n.saved[r * (cols + 1) + cols];
          float mean_d = 0.0F;
          float mean_dx = 0.0F;
          for (std::size_t c = 0; c < cols; ++c) {
            const float d = grad[r * cols + c] * gamma[c];
            mean_d += d;
            mean_dx += d * xhat(r, c);
          }
          mean_d *= inv_n;
          mean_dx *= inv_n;
          for (std::size_t c = 0; c < cols; ++c) {
            const float d = grad[r * cols + c] * gamma[c];
            g[r * cols + c] += rstd * (d - mean_d - xhat(r, c) * mean_dx);
          }
        }
      }
      return;
    }
    case OpKind::cross_entropy: {
      const std::size_t rows = n.saved.shape()[0];
      const std::size_t classes = n.saved.shape()[1];
      const float upstream = grad[0] / static_cast<float>(rows);
      Tensor& g = slot(0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < classes; ++c) {
          float p = n.saved[r * classes + c];
          if (static_cast<int>(c) == n.labels[r]) p -= 1.0F;
          g[r * classes + c] += upstream * p;
        }
      }
      return;
    }
    case OpKind::attention: {
      const auto [batch, seq, heads] = n.dims;
      const Tensor& tq = input(0);
      const Tensor& tk = input(1);
      const Tensor& tv = input(2);
      const std::size_t width = tq.shape()[1];
      const std::size_t hd = width / heads;
      const float sc = 1.0F / std::sqrt(static_cast<float>(hd));
      Tensor* gq = wants(0) ? &slot(0) : nullptr;
      Tensor* gk = wants(1) ? &slot(1) : nullptr;
      Tensor* gv = wants(2) ? &slot(2) : nullptr;
      std::vector<float> dp(seq);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
          const float* probs = n.saved.data() + (b * heads + h) * seq * seq;
          for (std::size_t i = 0; i < seq; ++i) {
            const std::size_t row_i = (b * seq + i) * width + h * hd;
            const float* go = grad.data() + row_i;
            float weighted = 0.0F;
            for (std::size_t j = 0; j < seq; ++j) {
              const std::size_t row_j = (b * seq + j) * width + h * hd;
              const float p = probs[i * seq + j];
              float dot = 0.0F;
              for (std::size_t c = 0; c < hd; ++c) dot += go[c] * tv[row_j + c];
              dp[j] = dot;
              weighted += p * dot;
              if (gv != nullptr) {
                for (std::size_t c = 0; c < hd; ++c) (*gv)[row_j + c] += p * go[c];
              }
            }
            for (std::size_t j = 0; j < seq; ++j) {
              const std::size_t row_j = (b * seq + j) * width + h * hd;
              const float ds = probs[i * seq + j] * (dp[j] - weighted) * sc;
              if (gq != nullptr) {
                for (std::size_t c = 0; c < hd; ++c) (*gq)[row_i + c] += ds * tk[row_j + c];
              }
              if (gk != nullptr) {
                for (std::size_t c = 0; c < hd; ++c) (*gk)[row_j + c] += ds * tq[row_i + c];
              }
            }
          }
        }
      }
      return;
    }
    case OpKind::mean_pool: {
      const auto [batch, seq, cols] = n.dims;
      const float inv = 1.0F / static_cast<float>(seq);
      Tensor& g = slot(0);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t s = 0; s < seq; ++s) {
          for (std::size_t c = 0; c < cols; ++c) g[(b * seq + s) * cols + c] += grad[b * cols + c] * inv;
        }
      }
      return;
    }
    case OpKind::sum: {
      Tensor& g = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad[0];
      return;
    }
    case OpKind::reshape: {
      Tensor& g = slot(0);
      for (std::size_t i = 0; i < grad.size(); ++i) g[i] += grad[i];
      return;
    }
  }
}

GradientSnapshot Tape::backward(Var loss) const {
  const Node& root = node(loss);
  if (root.value.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + to_string(root.value.shape()));
  }
  std::vector<Tensor> grads(nodes_.size());
  grads[loss.id] = Tensor::scalar(1.0F);
  GradientSnapshot snap;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    ++snap.visited_;
    if (n.op == OpKind::leaf || !n.requires_grad || grads[i].empty()) continue;
    backward_node(n, grads[i], grads);
    if (n.op != OpKind::leaf) grads[i] = Tensor();
  }
  snap.grads_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.op != OpKind::leaf || !n.requires_grad) continue;
    snap.grads_[i] = grads[i].empty() ? Tensor(n.value.shape()) : std::move(grads[i]);
  }
  return snap;
}

}  // namespace spt
