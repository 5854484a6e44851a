#pragma once

// Parameter archive:
//
//   bytes 0..7   magic "OCAGECK1"
//   bytes 8..15  header length N, little-endian u64
//   N bytes      JSON header {"config": ..., "entries": [{"name", "shape", "offset"}]}
//   payload      concatenated little-endian float64 values; offsets count doubles
//
// Entries keep the model's registration order so identical models yield
// identical bytes.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "occage/numcore/layers.hpp"

namespace occage::nc {

inline constexpr char kCheckpointMagic[8] = {'O', 'C', 'A', 'G', 'E', 'C', 'K', '1'};

struct ArchiveEntry {
  Shape shape;
  std::vector<double> values;
};

struct Archive {
  nlohmann::json config;
  std::vector<std::string> order;
  std::map<std::string, ArchiveEntry> entries;
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string serialize_state(const StateList& state, const nlohmann::json& config) {
  nlohmann::json header;
  header["config"] = config;
  header["entries"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& e : state) {
    header["entries"].push_back({{"name", e.name}, {"shape", e.tensor.shape()}, {"offset", offset}});
    offset += e.tensor.numel();
  }
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, 8);
  detail::put_u64(out, h.size());
  out += h;
  out.reserve(out.size() + offset * 8);
  for (const auto& e : state)
    for (double v : e.tensor.data()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline Archive parse_archive(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw IoError("checkpoint: bad magic");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t hlen = detail::get_u64(p + 8);
  if (16 + hlen > bytes.size()) throw IoError("checkpoint: truncated header");
  Archive ar;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + static_cast<long>(16 + hlen));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: malformed header: ") + e.what());
  }
  ar.config = header.value("config", nlohmann::json::object());
  const std::size_t payload = 16 + hlen;
  for (const auto& je : header.at("entries")) {
    ArchiveEntry e;
    e.shape = je.at("shape").get<Shape>();
    const auto off = je.at("offset").get<std::uint64_t>();
    const std::size_t n = numel(e.shape);
    if (payload + (off + n) * 8 > bytes.size()) throw IoError("checkpoint: truncated payload");
    e.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) e.values[i] = std::bit_cast<double>(detail::get_u64(p + payload + (off + i) * 8));
    const auto name = je.at("name").get<std::string>();
    ar.order.push_back(name);
    ar.entries.emplace(name, std::move(e));
  }
  return ar;
}

// Copies archived values into the model's tensors; every entry of the
// state list must be present with an identical shape.
inline void load_state(const StateList& state, const Archive& ar) {
  for (const auto& e : state) {
    auto it = ar.entries.find(e.name);
    if (it == ar.entries.end()) throw ValidationError("checkpoint: missing entry " + e.name);
    if (it->second.shape != e.tensor.shape())
      throw ShapeError("checkpoint: shape mismatch for " + e.name + ": " + to_string(it->second.shape) + " vs " +
                       to_string(e.tensor.shape()));
    std::copy(it->second.values.begin(), it->second.values.end(), e.tensor.mutable_data().begin());
  }
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void save_checkpoint(const std::string& path, const StateList& state, const nlohmann::json& config) {
  write_file(path, serialize_state(state, config));
}

inline Archive load_checkpoint(const std::string& path) { return parse_archive(read_file(path)); }

}  // namespace occage::nc
