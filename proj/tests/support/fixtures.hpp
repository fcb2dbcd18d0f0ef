// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "vicmae/config.hpp"
#include "vicmae/rng.hpp"

namespace vicmae::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& stem) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            (stem + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline Matrix unit_rows(Matrix m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) m.row(r).normalize();
  return m;
}

/// Small corpus for fast tests: 32x32 frames, patch 4.
inline SynthSpec small_corpus(std::uint64_t seed, int videos = 8, int images = 4, int frames = 6) {
  SynthSpec s;
  s.num_videos = videos;
  s.num_images = images;
  s.frames_per_video = frames;
  s.canvas = 32;
  s.patch_size = 4;
  s.seed = seed;
  return s;
}

/// Tiny model and a short schedule.
inline TrainConfig small_train(std::uint64_t seed) {
  TrainConfig c;
  c.model = ModelConfig::tiny();
  c.model.encoder = {1, 2, 16, 2.0};
  c.model.decoder = {1, 2, 8, 2.0};
  c.model.head = {{16}, 8};
  c.optim.batch_size = 4;
  c.optim.base_lr = 1e-2;
  c.optim.warmup_epochs = 1;
  c.optim.total_epochs = 4;
  c.seed = seed;
  return c;
}

}  // namespace vicmae::testing
