// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "../support/fixtures.hpp"
#include "vicmae/error.hpp"
#include "vicmae/patches.hpp"

using namespace vicmae;
using vicmae::testing::random_matrix;

namespace {

Image ramp_image(int side) {
  Image img(side, side);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<float>(i % 251) / 250.0f;
  return img;
}

TEST(Patchify, LayoutIsRasterThenRowColChannel) {
  const PatchConfig cfg{8, 4, 3};
  const Image img = ramp_image(8);
  const Matrix t = patchify(img, cfg);
  ASSERT_EQ(t.rows(), 4);
  ASSERT_EQ(t.cols(), 48);
  // Token 1 is the top-right patch; entry (row 2, col 3, channel 1).
  EXPECT_FLOAT_EQ(static_cast<float>(t(1, (2 * 4 + 3) * 3 + 1)), img.at(2, 4 + 3, 1));
  // Token 2 is the bottom-left patch.
  EXPECT_FLOAT_EQ(static_cast<float>(t(2, 0)), img.at(4, 0, 0));
  EXPECT_EQ(unpatchify(t, cfg), img);
}

TEST(Patchify, BatchStacksSamples) {
  const PatchConfig cfg{8, 4, 3};
  const std::vector<Image> imgs = {ramp_image(8), Image(8, 8, 0.25f)};
  const TokenBatch b = patchify(imgs, cfg);
  EXPECT_EQ(b.batch, 2);
  EXPECT_EQ(b.length, 4);
  EXPECT_EQ(b.tokens.topRows(4), patchify(imgs[0], cfg));
  EXPECT_TRUE((b.tokens.bottomRows(4).array() == 0.25).all());
}

TEST(Patchify, ClipConcatenatesFramesPerToken) {
  const PatchConfig cfg{8, 4, 3};
  const std::vector<Image> frames = {ramp_image(8), Image(8, 8, 0.5f)};
  const Matrix t = patchify_clip(frames, cfg);
  ASSERT_EQ(t.cols(), 96);
  EXPECT_EQ(t.leftCols(48), patchify(frames[0], cfg));
  EXPECT_EQ(t.rightCols(48), patchify(frames[1], cfg));
}

TEST(Patchify, RejectsBadGeometry) {
  EXPECT_THROW((PatchConfig{30, 4, 3}.validate()), ValidationError);
  EXPECT_THROW(patchify(Image(16, 16), PatchConfig{8, 4, 3}), ValidationError);
}

TEST(Mask, CountsAndPartition) {
  Rng rng(1);
  for (double r : {0.0, 0.5, 0.75, 0.9}) {
    const MaskPlan p = random_mask_plan(196, r, rng);
    EXPECT_EQ(p.num_visible(), visible_count(196, r));
    std::set<int> all(p.visible_idx.begin(), p.visible_idx.end());
    all.insert(p.masked_idx.begin(), p.masked_idx.end());
    EXPECT_EQ(all.size(), 196u);
    for (int k : p.visible_idx) EXPECT_TRUE(p.is_visible(k));
    for (int k : p.masked_idx) EXPECT_FALSE(p.is_visible(k));
  }
  EXPECT_EQ(visible_count(196, 0.75), 49);
  EXPECT_THROW(random_mask_plan(10, 1.0, rng), ValidationError);
}

TEST(Mask, RestoreRoundTrip) {
  Rng rng(2);
  const Matrix tokens = random_matrix(16, 5, rng);
  const MaskPlan plan = random_mask_plan(16, 0.75, rng);
  const RowVector fill = RowVector::Constant(5, -7.0);
  const Matrix restored = restore_with_mask_token(gather_visible(tokens, plan), plan, fill);
  for (int k = 0; k < 16; ++k) {
    if (plan.is_visible(k)) {
      EXPECT_EQ(restored.row(k), tokens.row(k));
    } else {
      EXPECT_EQ(restored.row(k), fill);
    }
  }
}

TEST(Mask, BatchSourcesAndWeights) {
  Rng rng(3);
  std::vector<MaskPlan> plans = {random_mask_plan(4, 0.5, rng), random_mask_plan(4, 0.5, rng)};
  const std::vector<int> src = restore_sources(plans, 1);
  ASSERT_EQ(src.size(), 10u);
  EXPECT_EQ(src[0], 0);
  EXPECT_EQ(src[5], 0);
  const Matrix w = mask_weights(plans);
  EXPECT_EQ(w.sum(), 4.0);
  for (int n = 0; n < 2; ++n) {
    for (int k = 0; k < 4; ++k) {
      const int s = src[static_cast<std::size_t>(n * 5 + 1 + k)];
      EXPECT_EQ(s < 0, !plans[static_cast<std::size_t>(n)].is_visible(k));
      EXPECT_EQ(w(n * 4 + k, 0), s < 0 ? 1.0 : 0.0);
      if (s >= 0) EXPECT_EQ(plans[static_cast<std::size_t>(n)].visible_idx[static_cast<std::size_t>(s - 1)], k);
    }
  }
}

TEST(Mask, FullPlanIsIdentity) {
  const MaskPlan p = MaskPlan::full(6);
  EXPECT_EQ(p.num_visible(), 6);
  EXPECT_TRUE(p.masked_idx.empty());
  for (int k = 0; k < 6; ++k) EXPECT_EQ(p.restore_perm[static_cast<std::size_t>(k)], k);
}

// Unbiased per-token variance.
TEST(Targets, NormalizedPerPatch) {
  Rng rng(4);
  const Matrix n = normalize_patch_targets(random_matrix(5, 12, rng, 3.0));
  for (Eigen::Index r = 0; r < n.rows(); ++r) {
    EXPECT_NEAR(n.row(r).mean(), 0.0, 1e-12);
    EXPECT_NEAR(n.row(r).squaredNorm() / 11.0, 1.0, 1e-5);
  }
}

}  // namespace
