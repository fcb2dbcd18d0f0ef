// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "../support/fixtures.hpp"
#include "vicmae/error.hpp"
#include "vicmae/network.hpp"

using namespace vicmae;
using vicmae::testing::random_matrix;
using vicmae::testing::small_corpus;
using vicmae::testing::small_train;

namespace {

ModelConfig small_model() { return small_train(0).model; }

TokenBatch random_images(const ModelConfig& cfg, int n, Rng& rng) {
  TokenBatch tb;
  tb.batch = n;
  tb.length = cfg.patch.num_tokens();
  tb.tokens = random_matrix(static_cast<Eigen::Index>(n) * tb.length, cfg.token_dim(), rng, 0.3).array() + 0.5;
  return tb;
}

TEST(PosEmbed, MatchesClosedForm) {
  const Matrix pe = sincos_posembed(16, 8);
  ASSERT_EQ(pe.rows(), 16);
  // Token (row 2, col 3); column half first, then row half; sin block then cos block.
  const int k = 2 * 4 + 3;
  for (int i = 0; i < 2; ++i) {
    const double omega = 1.0 / std::pow(10000.0, i / 2.0);
    EXPECT_NEAR(pe(k, i), std::sin(3 * omega), 1e-15);
    EXPECT_NEAR(pe(k, 2 + i), std::cos(3 * omega), 1e-15);
    EXPECT_NEAR(pe(k, 4 + i), std::sin(2 * omega), 1e-15);
    EXPECT_NEAR(pe(k, 6 + i), std::cos(2 * omega), 1e-15);
  }
  EXPECT_THROW(sincos_posembed(15, 8), ValidationError);
  EXPECT_THROW(sincos_posembed(16, 7), ValidationError);
}

TEST(Model, InitIsDeterministicAndValidated) {
  const Model a = init_model(small_model(), 3);
  const Model b = init_model(small_model(), 3);
  const Model c = init_model(small_model(), 4);
  EXPECT_EQ(a.params.checksum(), b.params.checksum());
  EXPECT_NE(a.params.checksum(), c.params.checksum());
  EXPECT_FALSE(a.params.at("pos_embed").trainable);
  ModelConfig bad = small_model();
  bad.encoder.heads = 3;
  EXPECT_THROW(init_model(bad, 0), ValidationError);
}

TEST(Model, ForwardShapes) {
  Rng rng(1);
  Model m = init_model(small_model(), 1);
  const int l = m.cfg.patch.num_tokens();
  const TokenBatch masked = random_mask(random_images(m.cfg, 3, rng), 0.75, rng);
  ag::Graph g;
  const Encoded enc = encode(g, m, masked);
  EXPECT_EQ(enc.prefix, 1);
  EXPECT_EQ(enc.seq, visible_count(l, 0.75) + 1);
  EXPECT_EQ(enc.tokens.rows(), 3 * enc.seq);
  EXPECT_EQ(enc.tokens.cols(), m.cfg.encoder.width);
  const ag::Var pred = decode(g, m, enc);
  EXPECT_EQ(pred.rows(), 3 * l);
  EXPECT_EQ(pred.cols(), m.cfg.token_dim());
  const ag::Var z = project(g, m, pool(enc, m.cfg.pooling, m.cfg.gem_p), HeadRole::target, true);
  EXPECT_EQ(z.rows(), 3);
  EXPECT_EQ(z.cols(), m.cfg.head.out_dim);
  for (Eigen::Index r = 0; r < 3; ++r) EXPECT_NEAR(z.value().row(r).norm(), 1.0, 1e-12);
  EXPECT_EQ(cls_features(enc).rows(), 3);
}

TEST(Model, PoolingSkipsClassToken) {
  Rng rng(2);
  ag::Graph g;
  Matrix rows = random_matrix(2 * 5, 4, rng).cwiseAbs();
  Encoded enc{g.constant(rows), 2, 5, 1, {}};
  const Matrix base = pool(enc, Pooling::max, 3.0).value();
  rows.row(0).setConstant(50.0);
  rows.row(5).setConstant(50.0);
  Encoded poked{g.constant(rows), 2, 5, 1, {}};
  for (Pooling p : {Pooling::mean, Pooling::max, Pooling::gem}) {
    EXPECT_EQ(pool(enc, p, 3.0).value(), pool(poked, p, 3.0).value()) << to_string(p);
  }
  EXPECT_EQ(base.rows(), 2);
}

TEST(Model, VisibleTokensAloneDetermineEncoding) {
  Rng rng(3);
  Model m = init_model(small_model(), 2);
  TokenBatch full = random_images(m.cfg, 2, rng);
  Rng mr(9);
  const TokenBatch a = random_mask(full, 0.75, mr);
  for (const auto& plan : a.plans) ASSERT_FALSE(plan.masked_idx.empty());
  // Overwrite every masked patch and mask again with the same stream.
  for (int n = 0; n < 2; ++n) {
    for (int k : a.plans[static_cast<std::size_t>(n)].masked_idx) full.tokens.row(n * full.length + k).setConstant(9.0);
  }
  Rng mr2(9);
  const TokenBatch b = random_mask(full, 0.75, mr2);
  ag::Graph g;
  EXPECT_EQ(encode(g, m, a).tokens.value(), encode(g, m, b).tokens.value());
}

TEST(Model, ClassifierAndFeatures) {
  Rng rng(4);
  Model m = init_model(small_model(), 5);
  EXPECT_FALSE(m.has_classifier());
  add_classifier(m, 4, 1);
  EXPECT_TRUE(m.has_classifier());
  EXPECT_EQ(m.num_classes(), 4);
  const std::uint64_t before = m.params.checksum();
  const TokenBatch tb = random_images(m.cfg, 2, rng);
  const std::vector<Matrix> samples = {tb.tokens.topRows(tb.length), tb.tokens.bottomRows(tb.length)};
  const Matrix f = extract_features(m, samples, false);
  EXPECT_EQ(f.rows(), 2);
  EXPECT_EQ(f.cols(), m.cfg.encoder.width);
  EXPECT_EQ(extract_features(m, samples, false), f);
  EXPECT_EQ(m.params.checksum(), before);
  ag::Graph g;
  EXPECT_EQ(classify(g, m, g.constant(f)).cols(), 4);
}

TEST(Inflate, ConstantClipReproducesImageTokens) {
  const SynthSpec s = small_corpus(3);
  const auto frame = render_clip(s, Motion::down, 7, 1)[0];
  Model image = init_model(small_model(), 6);
  Model video = inflate_to_video(image, 3);
  EXPECT_EQ(video.cfg.frames, 3);
  EXPECT_EQ(video.params.at("patch_embed.weight").value.rows(), 3 * image.cfg.patch.patch_dim());
  const std::vector<Image> clip(3, frame);
  const std::vector<Matrix> img_tokens = {sample_tokens(image, {&frame, 1})};
  const std::vector<Matrix> vid_tokens = {sample_tokens(video, clip)};
  const Matrix a = extract_features(image, img_tokens, true);
  const Matrix b = extract_features(video, vid_tokens, true);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_THROW(inflate_to_video(video, 2), ValidationError);
  EXPECT_THROW(sample_tokens(video, {&frame, 1}), ValidationError);
}

TEST(LayerId, Groups) {
  EXPECT_EQ(layer_id("patch_embed.weight", 4), 0);
  EXPECT_EQ(layer_id("cls_token", 4), 0);
  EXPECT_EQ(layer_id("pos_embed", 4), 0);
  EXPECT_EQ(layer_id("blocks.0.attn.qkv.weight", 4), 1);
  EXPECT_EQ(layer_id("blocks.3.mlp.fc2.bias", 4), 4);
  EXPECT_EQ(layer_id("norm.weight", 4), 5);
  EXPECT_EQ(layer_id("cls_head.weight", 4), 5);
}

TEST(Config, JsonRoundTripAndPoolingNames) {
  ModelConfig c = small_model();
  c.pooling = Pooling::max;
  c.learnable_log_tau = true;
  ModelConfig back;
  from_json_into(to_json(c), back);
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(parse_pooling("gem"), Pooling::gem);
  EXPECT_THROW(parse_pooling("median"), ValidationError);
}

}  // namespace
