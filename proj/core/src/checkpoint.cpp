// SPDX-License-Identifier: Apache-2.0
#include "vicmae/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vicmae/error.hpp"

namespace fs = std::filesystem;

namespace vicmae {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'V', 'I', 'C', 'M', 'A', 'E', 'C', 'K'};

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get(const std::string& in, std::size_t& pos, const std::string& origin) {
  if (pos + sizeof(T) > in.size()) throw IoError("truncated checkpoint: " + origin);
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

const Matrix* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return &m;
  }
  return nullptr;
}

std::string serialize(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["meta"] = ckpt.meta;
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [name, m] : ckpt.tensors) list.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  header["tensors"] = std::move(list);
  const std::string h = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, h.size());
  out += h;
  for (const auto& [name, m] : ckpt.tensors) {
    out.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  return out;
}

Checkpoint deserialize(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint (bad magic): " + origin);
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = get<std::uint32_t>(bytes, pos, origin);
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + origin);
  }
  const auto hlen = get<std::uint64_t>(bytes, pos, origin);
  if (pos + hlen > bytes.size()) throw IoError("truncated checkpoint header: " + origin);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint header in " + origin + ": " + e.what());
  }
  pos += hlen;
  Checkpoint ck;
  ck.meta = header.value("meta", nlohmann::json::object());
  for (const auto& t : header.at("tensors")) {
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    Matrix m(rows, cols);
    const std::size_t n = static_cast<std::size_t>(rows * cols) * sizeof(double);
    if (pos + n > bytes.size()) throw IoError("truncated checkpoint data: " + origin);
    std::memcpy(m.data(), bytes.data() + pos, n);
    pos += n;
    ck.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
  }
  if (pos != bytes.size()) throw IoError("trailing bytes in checkpoint: " + origin);
  return ck;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize(ckpt);
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint: " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    os.flush();
    if (!os) throw IoError("write failed (disk full?): " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return deserialize(ss.str(), path.string());
}

std::string file_hash(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for hashing: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  const std::string s = ss.str();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(s.data(), s.size())));
  return buf;
}

}  // namespace vicmae
