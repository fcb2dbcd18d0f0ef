// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode differentiation over row-major matrices.
//
// A Graph records every value produced during one forward pass together with a
// closure that maps the node's output gradient to its inputs. backward() walks
// the tape in reverse creation order, which is a valid topological order
// because nodes can only reference earlier nodes. Gradients of nodes bound to
// a Parameter are accumulated into Parameter::grad at the end.
//
// Token batches are flattened to [batch * seq, width]; ops that need the
// per-sample structure (attention, pooling, token insertion) take batch and
// seq explicitly.
#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "vicmae/tensor.hpp"

namespace vicmae::ag {

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while the Graph lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Graph& graph() const { return *graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  using BackwardFn = std::function<void(const Matrix& grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  /// Differentiable leaf not bound to a parameter; read its gradient with grad().
  Var input(Matrix value);
  /// Leaf bound to a parameter. Non-trainable parameters become constants.
  Var param(Parameter& p);

  /// With gradients disabled every leaf is a constant and no closures are kept.
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

  /// Registers an op node. The closure is discarded when no input needs a
  /// gradient.
  Var make(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var make(Matrix value, std::span<const Var> inputs, BackwardFn backward);

  bool needs_grad(const Var& v) const { return nodes_[static_cast<std::size_t>(v.id())].needs_grad; }
  /// Gradient accumulator for v, zero-initialised on first use.
  Matrix& grad_acc(const Var& v);
  /// Gradient after backward(); zeros if nothing reached v.
  Matrix grad(const Var& v) const;
  const Matrix& value(const Var& v) const { return nodes_[static_cast<std::size_t>(v.id())].value; }

  /// Back-propagates from a 1x1 root, scaling the seed gradient by `seed`.
  void backward(const Var& root, double seed = 1.0);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  // Deque keeps value references valid while nodes are appended.
  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
};

// ---- elementwise and linear algebra ---------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
/// x + bias, bias is [1, cols] broadcast over rows.
Var add_bias(Var x, Var bias);
Var add_constant(Var x, const Matrix& c);
Var matmul(Var a, Var b);
/// x * weight + bias with weight [in, out] and bias [1, out].
Var linear(Var x, Var weight, Var bias);
Var relu(Var x);
/// Exact (erf) GELU.
Var gelu(Var x);
Var exp(Var x);
Var detach(Var x);

/// Sum of c_i * x_i over 1x1 nodes.
Var weighted_sum(std::initializer_list<std::pair<Var, double>> terms);

// ---- normalization ---------------------------------------------------------

Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-6);

/// Running statistics owned by a parameter store (non-trainable).
struct BatchNormState {
  Parameter* running_mean = nullptr;
  Parameter* running_var = nullptr;
  double momentum = 0.1;
};

/// Batch normalization over rows. Training mode uses batch statistics (biased
/// variance) and updates `state` when given; eval mode uses `state`.
Var batch_norm(Var x, std::optional<Var> gamma, std::optional<Var> beta, BatchNormState state,
               bool training, double eps = 1e-5);

Var l2_normalize_rows(Var x, double eps = 1e-12);

// ---- token structure -------------------------------------------------------

/// Multi-head self-attention core. qkv is [batch*seq, 3*width] laid out as
/// (q | k | v); returns softmax(q k^T / sqrt(d)) v per head, [batch*seq, width].
Var attention(Var qkv, int batch, int seq, int heads);

Var gather_rows(Var x, std::vector<int> rows);
Var slice_rows(Var x, int begin, int count);
Var concat_rows(std::span<const Var> parts);

/// Prepends `token` ([1, width]) to every sample: [batch*seq] -> [batch*(seq+1)].
Var prepend_token(Var x, Var token, int batch, int seq);

/// Builds [batch*out_len, width] where row (n, k) is x row (n, source[n*out_len+k])
/// of a [batch*in_len, width] input, or `fill` ([1, width]) when the source is -1.
Var scatter_with_fill(Var x, Var fill, int batch, int in_len, int out_len,
                      std::vector<int> source);

/// Multiplies every row of sample n by factors[n].
Var scale_samples(Var x, int batch, std::vector<double> factors);

// ---- pooling over tokens (rows [skip, seq) of each sample) -------------------

Var mean_pool(Var x, int batch, int seq, int skip);
Var max_pool(Var x, int batch, int seq, int skip);
/// Generalized mean: (mean_t max(x, eps)^p)^(1/p).
Var gem_pool(Var x, int batch, int seq, int skip, double p, double eps = 1e-6);

// ---- objectives --------------------------------------------------------------

/// Mean over rows of the cross-entropy between softmax(logits) and the
/// probability rows of `targets`.
Var softmax_cross_entropy(Var logits, const Matrix& targets);

}  // namespace vicmae::ag
