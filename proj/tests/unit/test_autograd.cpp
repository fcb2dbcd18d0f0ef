// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "../support/fixtures.hpp"
#include "../support/gradcheck.hpp"
#include "vicmae/autograd.hpp"

using namespace vicmae;
using vicmae::testing::gradcheck;
using vicmae::testing::random_matrix;
using vicmae::testing::weighted_total;

namespace {

constexpr double kTol = 1e-6;

TEST(Autograd, LinearAndActivations) {
  Rng rng(1);
  const std::vector<Matrix> in = {random_matrix(5, 4, rng), random_matrix(4, 3, rng), random_matrix(1, 3, rng)};
  EXPECT_LT(gradcheck([](ag::Graph& g, const auto& v) { return weighted_total(g, ag::gelu(ag::linear(v[0], v[1], v[2]))); },
                      in),
            kTol);
  EXPECT_LT(gradcheck([](ag::Graph& g, const auto& v) { return weighted_total(g, ag::exp(ag::scale(v[0], 0.3))); },
                      {in[0]}),
            kTol);
  EXPECT_LT(gradcheck([](ag::Graph& g, const auto& v) { return weighted_total(g, ag::relu(ag::sub(v[0], v[1]))); },
                      {random_matrix(3, 3, rng), random_matrix(3, 3, rng)}),
            kTol);
}

TEST(Autograd, GeluMatchesErfDefinition) {
  ag::Graph g;
  Matrix x(1, 3);
  x << -1.5, 0.0, 2.0;
  const Matrix y = ag::gelu(g.constant(x)).value();
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(y(0, i), 0.5 * x(0, i) * (1 + std::erf(x(0, i) / std::sqrt(2.0))), 1e-15);
}

TEST(Autograd, LayerNormGradientsAndMoments) {
  Rng rng(2);
  const std::vector<Matrix> in = {random_matrix(6, 5, rng), random_matrix(1, 5, rng), random_matrix(1, 5, rng)};
  EXPECT_LT(gradcheck([](ag::Graph& g, const auto& v) { return weighted_total(g, ag::layer_norm(v[0], v[1], v[2])); },
                      in),
            kTol);
  ag::Graph g;
  const Matrix y = ag::layer_norm(g.constant(in[0]), g.constant(Matrix::Ones(1, 5)), g.constant(Matrix::Zero(1, 5)))
                       .value();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    EXPECT_NEAR(y.row(r).mean(), 0.0, 1e-12);
    EXPECT_NEAR(y.row(r).squaredNorm() / 5.0, 1.0, 1e-4);
  }
}

TEST(Autograd, BatchNormTrainingGradientsAndRunningStats) {
  Rng rng(3);
  const std::vector<Matrix> in = {random_matrix(7, 3, rng), random_matrix(1, 3, rng), random_matrix(1, 3, rng)};
  EXPECT_LT(gradcheck(
                [](ag::Graph& g, const auto& v) {
                  return weighted_total(g, ag::batch_norm(v[0], v[1], v[2], {}, true));
                },
                in),
            kTol);
  Parameter mean{Matrix::Zero(1, 3), {}, false, false};
  Parameter var{Matrix::Ones(1, 3), {}, false, false};
  ag::Graph g;
  ag::batch_norm(g.constant(in[0]), std::nullopt, std::nullopt, {&mean, &var, 0.1}, true);
  const RowVector mu = in[0].colwise().mean();
  const RowVector unbiased = (in[0].rowwise() - mu).array().square().colwise().sum() / 6.0;
  EXPECT_LT((mean.value - 0.1 * mu).norm(), 1e-12);
  EXPECT_LT((var.value - (0.9 * RowVector::Ones(3) + 0.1 * unbiased)).norm(), 1e-12);
}

TEST(Autograd, L2NormalizeRows) {
  Rng rng(4);
  EXPECT_LT(gradcheck([](ag::Graph& g, const auto& v) { return weighted_total(g, ag::l2_normalize_rows(v[0])); },
                      {random_matrix(4, 6, rng)}),
            kTol);
}

TEST(Autograd, AttentionGradientAndUniformCase) {
  Rng rng(5);
  const int batch = 2;
  const int seq = 3;
  const int width = 4;
  EXPECT_LT(gradcheck([&](ag::Graph& g, const auto& v) { return weighted_total(g, ag::attention(v[0], batch, seq, 2)); },
                      {random_matrix(batch * seq, 3 * width, rng)}),
            kTol);
  // Zero queries attend uniformly: the output is the per-sample mean of v.
  Matrix qkv = random_matrix(batch * seq, 3 * width, rng);
  qkv.leftCols(width).setZero();
  ag::Graph g;
  const Matrix out = ag::attention(g.constant(qkv), batch, seq, 2).value();
  for (int n = 0; n < batch; ++n) {
    const RowVector mean = qkv.block(n * seq, 2 * width, seq, width).colwise().mean();
    for (int s = 0; s < seq; ++s) EXPECT_LT((out.row(n * seq + s) - mean).norm(), 1e-12);
  }
}

TEST(Autograd, TokenPlumbing) {
  Rng rng(6);
  EXPECT_LT(gradcheck([](ag::Graph& g, const auto& v) { return weighted_total(g, ag::gather_rows(v[0], {2, 0, 2})); },
                      {random_matrix(4, 3, rng)}),
            kTol);
  EXPECT_LT(gradcheck(
                [](ag::Graph& g, const auto& v) {
                  return weighted_total(g, ag::prepend_token(v[0], v[1], 2, 2));
                },
                {random_matrix(4, 3, rng), random_matrix(1, 3, rng)}),
            kTol);
  EXPECT_LT(gradcheck(
                [](ag::Graph& g, const auto& v) {
                  return weighted_total(g, ag::scatter_with_fill(v[0], v[1], 2, 2, 3, {1, -1, 0, -1, 0, 1}));
                },
                {random_matrix(4, 3, rng), random_matrix(1, 3, rng)}),
            kTol);
  EXPECT_LT(gradcheck(
                [](ag::Graph& g, const auto& v) {
                  const std::vector<ag::Var> parts = {ag::slice_rows(v[0], 1, 2), v[0]};
                  return weighted_total(g, ag::scale_samples(ag::concat_rows(parts), 3, {0.5, 2.0, -1.0}));
                },
                {random_matrix(4, 3, rng)}),
            kTol);
}

TEST(Autograd, Pooling) {
  Rng rng(7);
  Matrix x = random_matrix(2 * 4, 3, rng).cwiseAbs();
  EXPECT_LT(gradcheck([](ag::Graph& g, const auto& v) { return weighted_total(g, ag::mean_pool(v[0], 2, 4, 1)); }, {x}),
            kTol);
  EXPECT_LT(gradcheck([](ag::Graph& g, const auto& v) { return weighted_total(g, ag::max_pool(v[0], 2, 4, 1)); }, {x}),
            kTol);
  EXPECT_LT(gradcheck([](ag::Graph& g, const auto& v) { return weighted_total(g, ag::gem_pool(v[0], 2, 4, 1, 3.0)); },
                      {x}),
            kTol);
  // The skipped leading row never contributes.
  ag::Graph g;
  Matrix y = x;
  y.row(0).setConstant(1e6);
  y.row(4).setConstant(1e6);
  EXPECT_EQ(ag::max_pool(g.constant(x), 2, 4, 1).value(), ag::max_pool(g.constant(y), 2, 4, 1).value());
}

TEST(Autograd, GemInterpolatesMeanAndMax) {
  ag::Graph g;
  Matrix x(3, 1);
  x << 0.2, 0.5, 0.9;
  EXPECT_NEAR(ag::gem_pool(g.constant(x), 1, 3, 0, 1.0).value()(0, 0), x.mean(), 1e-12);
  const double p3 = ag::gem_pool(g.constant(x), 1, 3, 0, 3.0).value()(0, 0);
  EXPECT_NEAR(p3, std::cbrt((0.008 + 0.125 + 0.729) / 3.0), 1e-12);
  EXPECT_GT(p3, x.mean());
  EXPECT_LT(p3, 0.9);
}

TEST(Autograd, SoftmaxCrossEntropy) {
  Rng rng(8);
  Matrix t = random_matrix(3, 4, rng).cwiseAbs();
  for (Eigen::Index r = 0; r < 3; ++r) t.row(r) /= t.row(r).sum();
  EXPECT_LT(gradcheck([&](ag::Graph&, const auto& v) { return ag::softmax_cross_entropy(v[0], t); },
                      {random_matrix(3, 4, rng)}),
            kTol);
  ag::Graph g;
  Matrix uniform = Matrix::Zero(2, 4);
  Matrix onehot = Matrix::Zero(2, 4);
  onehot(0, 1) = onehot(1, 3) = 1.0;
  EXPECT_NEAR(ag::softmax_cross_entropy(g.constant(uniform), onehot).scalar(), std::log(4.0), 1e-12);
}

TEST(Autograd, DetachAndNoGradMode) {
  ag::Graph g;
  const ag::Var x = g.input(Matrix::Ones(2, 2));
  const ag::Var y = ag::add(ag::scale(x, 2.0), ag::detach(ag::scale(x, 5.0)));
  g.backward(weighted_total(g, y));
  const Matrix gx = g.grad(x);
  ag::Graph g2;
  const ag::Var x2 = g2.input(Matrix::Ones(2, 2));
  g2.backward(weighted_total(g2, ag::scale(x2, 2.0)));
  EXPECT_EQ(gx, g2.grad(x2));

  Parameter p{Matrix::Ones(2, 2), Matrix::Zero(2, 2), true, true};
  ag::Graph off;
  off.set_grad_enabled(false);
  const ag::Var pv = off.param(p);
  EXPECT_FALSE(off.needs_grad(pv));
  EXPECT_FALSE(off.needs_grad(ag::scale(pv, 3.0)));
}

TEST(Autograd, ParameterGradientsAccumulate) {
  Parameter p{Matrix::Constant(1, 1, 3.0), Matrix::Zero(1, 1), true, true};
  ag::Graph g;
  const ag::Var v = g.param(p);
  g.backward(ag::add(ag::scale(v, 2.0), ag::scale(v, 4.0)));
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 6.0);
}

TEST(Autograd, ValueReferencesSurviveGraphGrowth) {
  ag::Graph g;
  const ag::Var x = g.input(Matrix::Constant(2, 2, 1.5));
  const Matrix& ref = x.value();
  for (int i = 0; i < 1000; ++i) g.constant(Matrix::Zero(1, 1));
  EXPECT_EQ(ref(1, 1), 1.5);
}

}  // namespace
