// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "../support/fixtures.hpp"
#include "vicmae/corpus.hpp"
#include "vicmae/error.hpp"

namespace fs = std::filesystem;
using namespace vicmae;
using vicmae::testing::small_corpus;
using vicmae::testing::TempDir;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

void write_json(const fs::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(1); }

TEST(Synthetic, SameSpecGivesIdenticalTrees) {
  TempDir dir("corpus_same");
  generate_synthetic(small_corpus(3), dir / "a");
  generate_synthetic(small_corpus(3), dir / "b");
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / fs::relative(e.path(), dir / "a"))) << e.path();
  }
  EXPECT_EQ(files, 8 * 6 + 4 + 1);
}

TEST(Synthetic, DifferentSeedsDiffer) {
  const SynthSpec a = small_corpus(1);
  const SynthSpec b = small_corpus(2);
  EXPECT_NE(render_clip(a, Motion::left, derive_seed(a.seed, {tag("video"), 0}), 3),
            render_clip(b, Motion::left, derive_seed(b.seed, {tag("video"), 0}), 3));
}

TEST(Synthetic, ManifestSchemaAndBalancedLabels) {
  TempDir dir("corpus_schema");
  const Manifest m = generate_synthetic(small_corpus(4), dir.path());
  const auto j = read_json(dir / "manifest.json");
  EXPECT_EQ(j["version"], 1);
  EXPECT_EQ(j["num_classes"], 4);
  EXPECT_EQ(j["split"], "train");
  ASSERT_EQ(j["records"].size(), 12u);
  EXPECT_EQ(j["records"][0]["kind"], "video");
  EXPECT_EQ(j["records"][0]["frames"].size(), 6u);
  EXPECT_EQ(j["records"][11]["kind"], "image");
  std::vector<int> counts(4, 0);
  for (std::size_t i : m.indices_of(ClipKind::video)) ++counts[static_cast<std::size_t>(*m.records[i].label)];
  EXPECT_EQ(counts, std::vector<int>(4, 2));
}

TEST(Synthetic, FramesRoundTripThroughPng) {
  TempDir dir("corpus_png");
  const Manifest made = generate_synthetic(small_corpus(5), dir.path());
  const Manifest loaded = load_manifest(dir / "manifest.json");
  ASSERT_EQ(made.size(), loaded.size());
  for (std::size_t r = 0; r < made.size(); ++r) {
    for (int t = 0; t < made.records[r].num_frames(); ++t) EXPECT_EQ(made.frame(r, t), loaded.frame(r, t));
  }
}

TEST(Synthetic, MotionMovesTheShape) {
  SynthSpec s = small_corpus(6);
  s.speed = 2.0;
  const auto moving = render_clip(s, Motion::right, 42, 3);
  const auto still = render_clip(s, Motion::still, 42, 3);
  EXPECT_NE(moving[0], moving[1]);
  EXPECT_EQ(still[0], still[2]);
  // Two steps right equals a horizontal roll of the first frame by 4 pixels.
  const Image& a = moving[0];
  const Image& b = moving[2];
  int mismatched = 0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      for (int c = 0; c < 3; ++c) mismatched += a.at(y, x, c) != b.at(y, (x + 4) % a.width, c);
    }
  }
  EXPECT_EQ(mismatched, 0);
}

TEST(Synthetic, TrailMarksTheDirection) {
  SynthSpec s = small_corpus(7);
  s.trail = 2;
  const auto left = render_clip(s, Motion::left, 11, 1);
  const auto right = render_clip(s, Motion::right, 11, 1);
  s.trail = 0;
  const auto plain = render_clip(s, Motion::left, 11, 1);
  EXPECT_NE(left[0], right[0]);
  EXPECT_NE(left[0], plain[0]);
}

TEST(Synthetic, DriftChangesColorsButNotGeometry) {
  SynthSpec s = small_corpus(8);
  const auto fixed = render_clip(s, Motion::still, 21, 4);
  s.drift = true;
  const auto drifting = render_clip(s, Motion::still, 21, 4);
  EXPECT_EQ(drifting[0], fixed[0]);
  EXPECT_NE(drifting[1], drifting[2]);
}

TEST(Synthetic, PaletteFixesTheBackground) {
  SynthSpec s = small_corpus(9);
  s.palette = 1;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Image f = render_clip(s, Motion::left, seed, 1)[0];
    int background = 0;
    for (int y = 0; y < f.height; ++y) {
      for (int x = 0; x < f.width; ++x) background += f.at(y, x, 2) == std::round(0.1f * 255.0f) / 255.0f;
    }
    EXPECT_GT(background, f.height * f.width / 2);
  }
  s.palette = 9;
  EXPECT_THROW(s.validate(), ValidationError);
}

TEST(Synthetic, RejectsBadSpecs) {
  TempDir dir("corpus_bad");
  SynthSpec s = small_corpus(1);
  s.patch_size = 5;
  EXPECT_THROW(generate_synthetic(s, dir.path()), ValidationError);
  s = small_corpus(1);
  s.frames_per_video = 1;
  EXPECT_THROW(s.validate(), ValidationError);
  s = small_corpus(1);
  s.num_videos = s.num_images = 0;
  EXPECT_THROW(s.validate(), ValidationError);
  s = small_corpus(1);
  s.motion_classes = {Motion::up, Motion::up};
  EXPECT_THROW(s.validate(), ValidationError);
}

TEST(Synthetic, UnwritableOutputIsAnIoError) {
  TempDir dir("corpus_io");
  std::ofstream(dir / "file") << "x";
  EXPECT_THROW(generate_synthetic(small_corpus(1), dir / "file" / "sub"), IoError);
}

TEST(Manifest, SpecJsonRoundTrip) {
  SynthSpec s = small_corpus(9);
  s.trail = 3;
  s.motion_classes = {Motion::up, Motion::still};
  s.split = Split::val;
  s.palette = 3;
  s.drift = true;
  s.size_lo = s.size_hi = 0.2;
  const SynthSpec back = synth_spec_from_json(to_json(s));
  EXPECT_EQ(to_json(back), to_json(s));
}

class ManifestErrors : public ::testing::Test {
 protected:
  void SetUp() override {
    generate_synthetic(small_corpus(2, 4, 2), dir_.path());
    doc_ = read_json(dir_ / "manifest.json");
  }
  void expect_rejected(const std::string& needle) {
    write_json(dir_ / "manifest.json", doc_);
    try {
      load_manifest(dir_ / "manifest.json");
      FAIL() << "accepted a bad manifest";
    } catch (const Error& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  }
  TempDir dir_{"manifest_err"};
  nlohmann::json doc_;
};

TEST_F(ManifestErrors, DuplicateId) {
  doc_["records"][1]["id"] = doc_["records"][0]["id"];
  expect_rejected("vid00000");
}

TEST_F(ManifestErrors, MissingFrame) {
  fs::remove(dir_ / doc_["records"][2]["frames"][1].get<std::string>());
  expect_rejected("f00001");
}

TEST_F(ManifestErrors, LabelOutOfRange) {
  doc_["records"][3]["label"] = 9;
  expect_rejected("vid00003");
}

TEST_F(ManifestErrors, SizeMismatch) {
  doc_["records"][0]["height"] = 16;
  expect_rejected("vid00000");
}

TEST_F(ManifestErrors, ImageWithSeveralFrames) {
  doc_["records"][4]["frames"].push_back(doc_["records"][4]["frames"][0]);
  expect_rejected("img00000");
}

TEST(Manifest, UnlabeledRecordsAreAllowed) {
  TempDir dir("manifest_unlabeled");
  generate_synthetic(small_corpus(2, 2, 2), dir.path());
  auto doc = read_json(dir / "manifest.json");
  doc["records"][0]["label"] = nullptr;
  write_json(dir / "manifest.json", doc);
  const Manifest m = load_manifest(dir / "manifest.json");
  EXPECT_FALSE(m.records[0].label.has_value());
}

TEST(Manifest, SubsetSharesFrames) {
  TempDir dir("manifest_subset");
  const Manifest m = generate_synthetic(small_corpus(2), dir.path());
  const Manifest s = m.subset({3, 9});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.records[1].id, m.records[9].id);
  EXPECT_EQ(s.frame(0, 2), m.frame(3, 2));
}

TEST(Pack, IndexesClassDirectories) {
  TempDir dir("pack");
  Image red(8, 8);
  for (std::size_t i = 0; i < red.pixels.size(); i += 3) red.pixels[i] = 1.0f;
  Image blue(8, 8);
  for (std::size_t i = 2; i < blue.pixels.size(); i += 3) blue.pixels[i] = 1.0f;
  fs::create_directories(dir / "cats/clip1");
  fs::create_directories(dir / "dogs");
  write_png(dir / "cats/clip1/000.png", red);
  write_png(dir / "cats/clip1/001.png", blue);
  write_png(dir / "dogs/photo.png", blue);
  const Manifest m = pack_directory(dir.path(), Split::val);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.num_classes, 2);
  EXPECT_EQ(m.split, Split::val);
  EXPECT_EQ(m.records[0].kind, ClipKind::video);
  EXPECT_EQ(*m.records[0].label, 0);
  EXPECT_EQ(m.records[0].num_frames(), 2);
  EXPECT_EQ(m.records[1].kind, ClipKind::image);
  EXPECT_EQ(*m.records[1].label, 1);
  EXPECT_EQ(m.frame(0, 0), red);
}

TEST(Pack, EmptyTreeIsRejected) {
  TempDir dir("pack_empty");
  EXPECT_THROW(pack_directory(dir.path(), Split::train), ValidationError);
}

}  // namespace
