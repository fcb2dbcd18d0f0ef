// SPDX-License-Identifier: Apache-2.0
#include "vicmae/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vicmae/error.hpp"

namespace vicmae::ag {

namespace {

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) {
    throw ValidationError(std::string(op) + ": " + what);
  }
}

std::string shape(const Matrix& m) {
  return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]";
}

}  // namespace

const Matrix& Var::value() const { return graph_->value(*this); }

Var Graph::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::input(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.needs_grad = p.trainable && grad_enabled_;
  n.param = n.needs_grad ? &p : nullptr;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::make(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return make(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Graph::make(Matrix value, std::span<const Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& v : inputs) {
    if (v.graph_ != this) {
      throw ValidationError("autograd: input belongs to a different graph");
    }
    n.needs_grad = n.needs_grad || needs_grad(v);
  }
  if (n.needs_grad) {
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Graph::grad_acc(const Var& v) {
  Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (n.grad.size() == 0) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

Matrix Graph::grad(const Var& v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (n.grad.size() == 0) {
    return Matrix::Zero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Graph::backward(const Var& root, double seed) {
  require(root.graph_ == this, "backward", "root from another graph");
  require(root.rows() == 1 && root.cols() == 1, "backward", "root must be 1x1, got " + shape(root.value()));
  for (auto& n : nodes_) {
    n.grad.resize(0, 0);
  }
  if (!needs_grad(root)) {
    return;
  }
  grad_acc(root)(0, 0) = seed;
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || n.grad.size() == 0) {
      continue;
    }
    if (n.backward) {
      n.backward(n.grad);
    }
    if (n.param != nullptr) {
      n.param->grad += n.grad;
    }
  }
}

// ---- elementwise -------------------------------------------------------------

Var add(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add", shape(a.value()) + " vs " + shape(b.value()));
  Graph& g = a.graph();
  return g.make(a.value() + b.value(), {a, b}, [&g, a, b](const Matrix& go) {
    if (g.needs_grad(a)) g.grad_acc(a) += go;
    if (g.needs_grad(b)) g.grad_acc(b) += go;
  });
}

Var sub(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub", shape(a.value()) + " vs " + shape(b.value()));
  Graph& g = a.graph();
  return g.make(a.value() - b.value(), {a, b}, [&g, a, b](const Matrix& go) {
    if (g.needs_grad(a)) g.grad_acc(a) += go;
    if (g.needs_grad(b)) g.grad_acc(b) -= go;
  });
}

Var scale(Var a, double s) {
  Graph& g = a.graph();
  return g.make(a.value() * s, {a}, [&g, a, s](const Matrix& go) { g.grad_acc(a) += go * s; });
}

Var add_bias(Var x, Var bias) {
  require(bias.rows() == 1 && bias.cols() == x.cols(), "add_bias", shape(x.value()) + " + " + shape(bias.value()));
  Graph& g = x.graph();
  Matrix out = x.value();
  out.rowwise() += bias.value().row(0);
  return g.make(std::move(out), {x, bias}, [&g, x, bias](const Matrix& go) {
    if (g.needs_grad(x)) g.grad_acc(x) += go;
    if (g.needs_grad(bias)) g.grad_acc(bias) += go.colwise().sum();
  });
}

Var add_constant(Var x, const Matrix& c) {
  require(c.rows() == x.rows() && c.cols() == x.cols(), "add_constant", shape(x.value()) + " + " + shape(c));
  Graph& g = x.graph();
  return g.make(x.value() + c, {x}, [&g, x](const Matrix& go) { g.grad_acc(x) += go; });
}

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul", shape(a.value()) + " * " + shape(b.value()));
  Graph& g = a.graph();
  Matrix out = a.value() * b.value();
  return g.make(std::move(out), {a, b}, [&g, a, b](const Matrix& go) {
    if (g.needs_grad(a)) g.grad_acc(a).noalias() += go * b.value().transpose();
    if (g.needs_grad(b)) g.grad_acc(b).noalias() += a.value().transpose() * go;
  });
}

Var linear(Var x, Var weight, Var bias) {
  require(x.cols() == weight.rows(), "linear", shape(x.value()) + " * " + shape(weight.value()));
  require(bias.rows() == 1 && bias.cols() == weight.cols(), "linear", "bias " + shape(bias.value()));
  Graph& g = x.graph();
  Matrix out(x.rows(), weight.cols());
  out.noalias() = x.value() * weight.value();
  out.rowwise() += bias.value().row(0);
  return g.make(std::move(out), {x, weight, bias}, [&g, x, weight, bias](const Matrix& go) {
    if (g.needs_grad(x)) g.grad_acc(x).noalias() += go * weight.value().transpose();
    if (g.needs_grad(weight)) g.grad_acc(weight).noalias() += x.value().transpose() * go;
    if (g.needs_grad(bias)) g.grad_acc(bias) += go.colwise().sum();
  });
}

Var relu(Var x) {
  Graph& g = x.graph();
  Matrix out = x.value().cwiseMax(0.0);
  return g.make(std::move(out), {x}, [&g, x](const Matrix& go) {
    g.grad_acc(x).array() += (x.value().array() > 0.0).select(go.array(), 0.0);
  });
}

Var gelu(Var x) {
  Graph& g = x.graph();
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  const double* in = xv.data();
  double* o = out.data();
  for (Eigen::Index i = 0; i < xv.size(); ++i) {
    o[i] = 0.5 * in[i] * (1.0 + std::erf(in[i] * M_SQRT1_2));
  }
  return g.make(std::move(out), {x}, [&g, x](const Matrix& go) {
    const Matrix& xv = x.value();
    Matrix& acc = g.grad_acc(x);
    const double* in = xv.data();
    const double* gp = go.data();
    double* a = acc.data();
    constexpr double kInvSqrt2Pi = 0.3989422804014327;
    for (Eigen::Index i = 0; i < xv.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(in[i] * M_SQRT1_2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * in[i] * in[i]);
      a[i] += gp[i] * (cdf + in[i] * pdf);
    }
  });
}

Var exp(Var x) {
  Graph& g = x.graph();
  Matrix out = x.value().array().exp().matrix();
  return g.make(out, {x}, [&g, x, out](const Matrix& go) { g.grad_acc(x).array() += go.array() * out.array(); });
}

Var detach(Var x) { return x.graph().constant(x.value()); }

Var weighted_sum(std::initializer_list<std::pair<Var, double>> terms) {
  require(terms.size() > 0, "weighted_sum", "no terms");
  Graph& g = terms.begin()->first.graph();
  std::vector<Var> inputs;
  std::vector<double> coeffs;
  double total = 0.0;
  for (const auto& [v, c] : terms) {
    require(v.rows() == 1 && v.cols() == 1, "weighted_sum", "terms must be 1x1");
    total += c * v.scalar();
    inputs.push_back(v);
    coeffs.push_back(c);
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  return g.make(std::move(out), std::span<const Var>(inputs), [&g, inputs, coeffs](const Matrix& go) {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (g.needs_grad(inputs[i])) g.grad_acc(inputs[i])(0, 0) += coeffs[i] * go(0, 0);
    }
  });
}

// ---- normalization -------------------------------------------------------------

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  require(gamma.rows() == 1 && gamma.cols() == d && beta.rows() == 1 && beta.cols() == d, "layer_norm",
          "affine shape mismatch for " + shape(x.value()));
  Graph& g = x.graph();
  const Matrix& xv = x.value();
  Matrix xhat(n, d);
  Vector inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = xv.row(r).mean();
    const double var = (xv.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return g.make(std::move(out), {x, gamma, beta},
                [&g, x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](const Matrix& go) {
                  if (g.needs_grad(gamma)) g.grad_acc(gamma) += (go.array() * xhat.array()).colwise().sum().matrix();
                  if (g.needs_grad(beta)) g.grad_acc(beta) += go.colwise().sum();
                  if (g.needs_grad(x)) {
                    Matrix& acc = g.grad_acc(x);
                    const auto gam = gamma.value().row(0).array();
                    const double dn = static_cast<double>(xhat.cols());
                    for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                      const Eigen::ArrayXd dxhat = (go.row(r).array() * gam).transpose();
                      const double m1 = dxhat.mean();
                      const double m2 = (dxhat * xhat.row(r).array().transpose()).sum() / dn;
                      acc.row(r).array() +=
                          (inv_std(r) * (dxhat - m1 - xhat.row(r).array().transpose() * m2)).transpose();
                    }
                  }
                });
}

Var batch_norm(Var x, std::optional<Var> gamma, std::optional<Var> beta, BatchNormState state, bool training,
               double eps) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  Graph& g = x.graph();
  const Matrix& xv = x.value();
  RowVector mean(d);
  RowVector var(d);
  if (training) {
    require(n >= 2, "batch_norm", "training mode needs at least 2 rows");
    mean = xv.colwise().mean();
    var = (xv.rowwise() - mean).array().square().colwise().mean();
    if (state.running_mean != nullptr && state.running_var != nullptr) {
      const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
      state.running_mean->value = (1.0 - state.momentum) * state.running_mean->value + state.momentum * mean;
      state.running_var->value =
          (1.0 - state.momentum) * state.running_var->value + state.momentum * unbias * var;
    }
  } else {
    require(state.running_mean != nullptr && state.running_var != nullptr, "batch_norm",
            "eval mode requires running statistics");
    mean = state.running_mean->value.row(0);
    var = state.running_var->value.row(0);
  }
  const RowVector inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix xhat = (xv.rowwise() - mean).array().rowwise() * inv_std.array();
  Matrix out = xhat;
  if (gamma) out = out.array().rowwise() * gamma->value().row(0).array();
  if (beta) out.rowwise() += beta->value().row(0);

  Var gv = gamma ? *gamma : g.constant(Matrix::Ones(1, d));
  Var bv = beta ? *beta : g.constant(Matrix::Zero(1, d));
  return g.make(std::move(out), {x, gv, bv},
                [&g, x, gv, bv, training, xhat = std::move(xhat), inv_std](const Matrix& go) {
                  if (g.needs_grad(gv)) g.grad_acc(gv) += (go.array() * xhat.array()).colwise().sum().matrix();
                  if (g.needs_grad(bv)) g.grad_acc(bv) += go.colwise().sum();
                  if (!g.needs_grad(x)) return;
                  Matrix dxhat = go.array().rowwise() * gv.value().row(0).array();
                  Matrix& acc = g.grad_acc(x);
                  if (!training) {
                    acc += (dxhat.array().rowwise() * inv_std.array()).matrix();
                    return;
                  }
                  const RowVector m1 = dxhat.colwise().mean();
                  const RowVector m2 = (dxhat.array() * xhat.array()).colwise().mean().matrix();
                  Matrix dx = dxhat.rowwise() - m1;
                  dx -= (xhat.array().rowwise() * m2.array()).matrix();
                  acc += (dx.array().rowwise() * inv_std.array()).matrix();
                });
}

Var l2_normalize_rows(Var x, double eps) {
  Graph& g = x.graph();
  const Matrix& xv = x.value();
  Vector norms = xv.rowwise().norm().cwiseMax(eps);
  Matrix out = xv.array().colwise() / norms.array();
  return g.make(out, {x}, [&g, x, out, norms = std::move(norms)](const Matrix& go) {
    // d(x/|x|) = (go - y (y.go)) / |x|
    const Vector dots = (go.array() * out.array()).rowwise().sum();
    Matrix dx = go - (out.array().colwise() * dots.array()).matrix();
    g.grad_acc(x) += (dx.array().colwise() / norms.array()).matrix();
  });
}

// ---- attention -------------------------------------------------------------------

Var attention(Var qkv, int batch, int seq, int heads) {
  require(qkv.rows() == static_cast<Eigen::Index>(batch) * seq, "attention",
          "rows " + std::to_string(qkv.rows()) + " != batch*seq");
  require(qkv.cols() % 3 == 0, "attention", "qkv width not divisible by 3");
  const int width = static_cast<int>(qkv.cols() / 3);
  require(heads > 0 && width % heads == 0, "attention", "width not divisible by heads");
  const int hd = width / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(hd));
  Graph& g = qkv.graph();
  const Matrix& in = qkv.value();
  Matrix out(in.rows(), width);
  std::vector<Matrix> probs(static_cast<std::size_t>(batch) * heads);
  for (int n = 0; n < batch; ++n) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(n) * seq;
    for (int h = 0; h < heads; ++h) {
      const auto q = in.block(r0, h * hd, seq, hd);
      const auto k = in.block(r0, width + h * hd, seq, hd);
      const auto v = in.block(r0, 2 * width + h * hd, seq, hd);
      Matrix s(seq, seq);
      s.noalias() = q * k.transpose();
      s *= sc;
      for (int i = 0; i < seq; ++i) {
        const double m = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - m).exp().matrix();
        s.row(i) /= s.row(i).sum();
      }
      out.block(r0, h * hd, seq, hd).noalias() = s * v;
      probs[static_cast<std::size_t>(n) * heads + h] = std::move(s);
    }
  }
  return g.make(std::move(out), {qkv},
                [&g, qkv, batch, seq, heads, hd, width, sc, probs = std::move(probs)](const Matrix& go) {
                  const Matrix& in = qkv.value();
                  Matrix& acc = g.grad_acc(qkv);
                  Matrix da(seq, seq);
                  for (int n = 0; n < batch; ++n) {
                    const Eigen::Index r0 = static_cast<Eigen::Index>(n) * seq;
                    for (int h = 0; h < heads; ++h) {
                      const Matrix& a = probs[static_cast<std::size_t>(n) * heads + h];
                      const auto q = in.block(r0, h * hd, seq, hd);
                      const auto k = in.block(r0, width + h * hd, seq, hd);
                      const auto v = in.block(r0, 2 * width + h * hd, seq, hd);
                      const auto dout = go.block(r0, h * hd, seq, hd);
                      acc.block(r0, 2 * width + h * hd, seq, hd).noalias() += a.transpose() * dout;
                      da.noalias() = dout * v.transpose();
                      const Vector rowdot = (da.array() * a.array()).rowwise().sum();
                      Matrix ds = (a.array() * (da.array().colwise() - rowdot.array())).matrix() * sc;
                      acc.block(r0, h * hd, seq, hd).noalias() += ds * k;
                      acc.block(r0, width + h * hd, seq, hd).noalias() += ds.transpose() * q;
                    }
                  }
                });
}

// ---- row plumbing -------------------------------------------------------------------

Var gather_rows(Var x, std::vector<int> rows) {
  Graph& g = x.graph();
  const Matrix& xv = x.value();
  Matrix out(static_cast<Eigen::Index>(rows.size()), xv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < xv.rows(), "gather_rows", "row index out of range");
    out.row(static_cast<Eigen::Index>(i)) = xv.row(rows[i]);
  }
  return g.make(std::move(out), {x}, [&g, x, rows = std::move(rows)](const Matrix& go) {
    Matrix& acc = g.grad_acc(x);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      acc.row(rows[i]) += go.row(static_cast<Eigen::Index>(i));
    }
  });
}

Var slice_rows(Var x, int begin, int count) {
  require(begin >= 0 && count >= 0 && begin + count <= x.rows(), "slice_rows", "range out of bounds");
  Graph& g = x.graph();
  Matrix out = x.value().middleRows(begin, count);
  return g.make(std::move(out), {x},
                [&g, x, begin, count](const Matrix& go) { g.grad_acc(x).middleRows(begin, count) += go; });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows", "no inputs");
  Graph& g = parts.front().graph();
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const Var& p : parts) {
    require(p.cols() == cols, "concat_rows", "column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> copy(parts.begin(), parts.end());
  return g.make(std::move(out), parts, [&g, copy](const Matrix& go) {
    Eigen::Index r = 0;
    for (const Var& p : copy) {
      if (g.needs_grad(p)) g.grad_acc(p) += go.middleRows(r, p.rows());
      r += p.rows();
    }
  });
}

Var prepend_token(Var x, Var token, int batch, int seq) {
  require(x.rows() == static_cast<Eigen::Index>(batch) * seq, "prepend_token", "rows != batch*seq");
  require(token.rows() == 1 && token.cols() == x.cols(), "prepend_token", "token shape mismatch");
  Graph& g = x.graph();
  Matrix out(static_cast<Eigen::Index>(batch) * (seq + 1), x.cols());
  for (int n = 0; n < batch; ++n) {
    out.row(static_cast<Eigen::Index>(n) * (seq + 1)) = token.value().row(0);
    out.middleRows(static_cast<Eigen::Index>(n) * (seq + 1) + 1, seq) =
        x.value().middleRows(static_cast<Eigen::Index>(n) * seq, seq);
  }
  return g.make(std::move(out), {x, token}, [&g, x, token, batch, seq](const Matrix& go) {
    for (int n = 0; n < batch; ++n) {
      if (g.needs_grad(token)) g.grad_acc(token) += go.row(static_cast<Eigen::Index>(n) * (seq + 1));
      if (g.needs_grad(x)) {
        g.grad_acc(x).middleRows(static_cast<Eigen::Index>(n) * seq, seq) +=
            go.middleRows(static_cast<Eigen::Index>(n) * (seq + 1) + 1, seq);
      }
    }
  });
}

Var scatter_with_fill(Var x, Var fill, int batch, int in_len, int out_len, std::vector<int> source) {
  require(x.rows() == static_cast<Eigen::Index>(batch) * in_len, "scatter_with_fill", "rows != batch*in_len");
  require(fill.rows() == 1 && fill.cols() == x.cols(), "scatter_with_fill", "fill shape mismatch");
  require(source.size() == static_cast<std::size_t>(batch) * out_len, "scatter_with_fill", "source size mismatch");
  Graph& g = x.graph();
  Matrix out(static_cast<Eigen::Index>(batch) * out_len, x.cols());
  for (int n = 0; n < batch; ++n) {
    for (int k = 0; k < out_len; ++k) {
      const int s = source[static_cast<std::size_t>(n) * out_len + k];
      const Eigen::Index r = static_cast<Eigen::Index>(n) * out_len + k;
      if (s < 0) {
        out.row(r) = fill.value().row(0);
      } else {
        require(s < in_len, "scatter_with_fill", "source index out of range");
        out.row(r) = x.value().row(static_cast<Eigen::Index>(n) * in_len + s);
      }
    }
  }
  return g.make(std::move(out), {x, fill},
                [&g, x, fill, batch, in_len, out_len, source = std::move(source)](const Matrix& go) {
                  for (int n = 0; n < batch; ++n) {
                    for (int k = 0; k < out_len; ++k) {
                      const int s = source[static_cast<std::size_t>(n) * out_len + k];
                      const Eigen::Index r = static_cast<Eigen::Index>(n) * out_len + k;
                      if (s < 0) {
                        if (g.needs_grad(fill)) g.grad_acc(fill) += go.row(r);
                      } else if (g.needs_grad(x)) {
                        g.grad_acc(x).row(static_cast<Eigen::Index>(n) * in_len + s) += go.row(r);
                      }
                    }
                  }
                });
}

Var scale_samples(Var x, int batch, std::vector<double> factors) {
  require(factors.size() == static_cast<std::size_t>(batch), "scale_samples", "one factor per sample");
  require(x.rows() % batch == 0, "scale_samples", "rows not divisible by batch");
  const Eigen::Index seq = x.rows() / batch;
  Graph& g = x.graph();
  Matrix out = x.value();
  for (int n = 0; n < batch; ++n) {
    out.middleRows(n * seq, seq) *= factors[static_cast<std::size_t>(n)];
  }
  return g.make(std::move(out), {x}, [&g, x, batch, seq, factors = std::move(factors)](const Matrix& go) {
    Matrix& acc = g.grad_acc(x);
    for (int n = 0; n < batch; ++n) {
      acc.middleRows(n * seq, seq) += go.middleRows(n * seq, seq) * factors[static_cast<std::size_t>(n)];
    }
  });
}

// ---- pooling ------------------------------------------------------------------------

namespace {

void check_pool(const Var& x, int batch, int seq, int skip, const char* op) {
  require(x.rows() == static_cast<Eigen::Index>(batch) * seq, op, "rows != batch*seq");
  require(skip >= 0 && skip < seq, op, "no tokens left to pool");
}

}  // namespace

Var mean_pool(Var x, int batch, int seq, int skip) {
  check_pool(x, batch, seq, skip, "mean_pool");
  Graph& g = x.graph();
  const int t = seq - skip;
  Matrix out(batch, x.cols());
  for (int n = 0; n < batch; ++n) {
    out.row(n) = x.value().middleRows(static_cast<Eigen::Index>(n) * seq + skip, t).colwise().mean();
  }
  return g.make(std::move(out), {x}, [&g, x, batch, seq, skip, t](const Matrix& go) {
    Matrix& acc = g.grad_acc(x);
    for (int n = 0; n < batch; ++n) {
      acc.middleRows(static_cast<Eigen::Index>(n) * seq + skip, t).rowwise() += go.row(n) / t;
    }
  });
}

Var max_pool(Var x, int batch, int seq, int skip) {
  check_pool(x, batch, seq, skip, "max_pool");
  Graph& g = x.graph();
  const Eigen::Index d = x.cols();
  Matrix out(batch, d);
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(batch) * d);
  for (int n = 0; n < batch; ++n) {
    for (Eigen::Index c = 0; c < d; ++c) {
      Eigen::Index best = static_cast<Eigen::Index>(n) * seq + skip;
      for (int s = skip + 1; s < seq; ++s) {
        const Eigen::Index r = static_cast<Eigen::Index>(n) * seq + s;
        if (x.value()(r, c) > x.value()(best, c)) best = r;
      }
      out(n, c) = x.value()(best, c);
      arg[static_cast<std::size_t>(n * d + c)] = best;
    }
  }
  return g.make(std::move(out), {x}, [&g, x, batch, d, arg = std::move(arg)](const Matrix& go) {
    Matrix& acc = g.grad_acc(x);
    for (int n = 0; n < batch; ++n) {
      for (Eigen::Index c = 0; c < d; ++c) {
        acc(arg[static_cast<std::size_t>(n * d + c)], c) += go(n, c);
      }
    }
  });
}

Var gem_pool(Var x, int batch, int seq, int skip, double p, double eps) {
  check_pool(x, batch, seq, skip, "gem_pool");
  require(p >= 1.0, "gem_pool", "exponent must be >= 1");
  Graph& g = x.graph();
  const int t = seq - skip;
  const Eigen::Index d = x.cols();
  Matrix out(batch, d);
  for (int n = 0; n < batch; ++n) {
    const auto block = x.value().middleRows(static_cast<Eigen::Index>(n) * seq + skip, t);
    for (Eigen::Index c = 0; c < d; ++c) {
      // Scale by the column max so large exponents stay in range.
      const double m = block.col(c).cwiseMax(eps).maxCoeff();
      double acc = 0.0;
      for (int s = 0; s < t; ++s) acc += std::pow(std::max(block(s, c), eps) / m, p);
      out(n, c) = m * std::pow(acc / t, 1.0 / p);
    }
  }
  return g.make(out, {x}, [&g, x, batch, seq, skip, t, d, p, eps, out](const Matrix& go) {
    Matrix& acc = g.grad_acc(x);
    for (int n = 0; n < batch; ++n) {
      for (int s = 0; s < t; ++s) {
        const Eigen::Index r = static_cast<Eigen::Index>(n) * seq + skip + s;
        for (Eigen::Index c = 0; c < d; ++c) {
          const double v = x.value()(r, c);
          if (v <= eps) continue;
          // dy/dx_t = (x_t / y)^(p-1) / T
          acc(r, c) += go(n, c) * std::pow(v / out(n, c), p - 1.0) / t;
        }
      }
    }
  });
}

// ---- objectives -------------------------------------------------------------------------

Var softmax_cross_entropy(Var logits, const Matrix& targets) {
  require(targets.rows() == logits.rows() && targets.cols() == logits.cols(), "softmax_cross_entropy",
          "target shape mismatch");
  Graph& g = logits.graph();
  const Matrix& z = logits.value();
  Matrix prob(z.rows(), z.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    const Eigen::ArrayXd e = (z.row(r).array() - m).exp().transpose();
    const double lse = m + std::log(e.sum());
    prob.row(r) = (e / e.sum()).transpose();
    loss -= (targets.row(r).array() * (z.row(r).array() - lse)).sum();
  }
  const double inv_n = 1.0 / static_cast<double>(z.rows());
  Matrix out(1, 1);
  out(0, 0) = loss * inv_n;
  return g.make(std::move(out), {logits},
                [&g, logits, prob = std::move(prob), targets, inv_n](const Matrix& go) {
                  g.grad_acc(logits) += (prob - targets) * (inv_n * go(0, 0));
                });
}

}  // namespace vicmae::ag
