// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint archive:
//   "VICMAECK" | u32 version | u64 header length | JSON header | tensor data
// The header lists every tensor (name, rows, cols) in storage order plus free
// form metadata; tensor data is row-major little-endian float64.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vicmae/tensor.hpp"

namespace vicmae {

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Matrix>> tensors;

  const Matrix* find(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::string& bytes, const std::string& origin = "<memory>");

/// Writes atomically (temporary file then rename).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Hex FNV-1a digest of a file's bytes.
std::string file_hash(const std::filesystem::path& path);

}  // namespace vicmae
