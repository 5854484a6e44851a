#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "occage/agehead/head.hpp"
#include "occage/core/rng.hpp"
#include "occage/facegeom/image.hpp"

namespace occage::pl {

enum class Split { kTrain, kVal, kTest };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw ValidationError("unknown split '" + s + "' (expected train, val or test)");
}

struct Record {
  std::string id;
  std::string image;  // relative paths resolve against the manifest's directory
  double age = 0.0;
  fg::LandmarkSet landmarks{};
  std::optional<std::string> mask;
  std::optional<Split> split;
  std::optional<int> fold;
  std::optional<std::string> source;  // unoccluded original, set by occlusion and inpainting outputs

  bool operator==(const Record&) const = default;
};

struct Manifest {
  std::vector<Record> records;
  std::filesystem::path root;  // base for relative paths

  std::size_t size() const { return records.size(); }
  std::string resolve(const std::string& p) const {
    const std::filesystem::path q(p);
    return q.is_absolute() || root.empty() ? q.string() : (root / q).string();
  }
  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i)
      if (records[i].split == s) out.push_back(i);
    return out;
  }
};

inline nlohmann::json record_json(const Record& r) {
  nlohmann::json lm = nlohmann::json::array();
  for (const auto& p : r.landmarks.points) lm.push_back({p.x, p.y});
  nlohmann::json j{{"id", r.id}, {"image", r.image}, {"age", r.age}, {"landmarks", lm}};
  if (r.mask) j["mask"] = *r.mask;
  if (r.split) j["split"] = to_string(*r.split);
  if (r.fold) j["fold"] = *r.fold;
  if (r.source) j["source"] = *r.source;
  return j;
}

inline Record parse_record(const nlohmann::json& j) {
  Record r;
  try {
    r.id = j.at("id").get<std::string>();
    r.image = j.at("image").get<std::string>();
    r.age = j.at("age").get<double>();
    const auto& lm = j.at("landmarks");
    if (!lm.is_array() || lm.size() != fg::kLandmarkCount)
      throw ValidationError("manifest: record '" + r.id + "' needs " + std::to_string(fg::kLandmarkCount) + " landmarks");
    for (std::size_t i = 0; i < fg::kLandmarkCount; ++i) {
      if (!lm[i].is_array() || lm[i].size() != 2) throw ValidationError("manifest: landmark must be an [x, y] pair");
      r.landmarks[i] = {lm[i][0].get<double>(), lm[i][1].get<double>()};
    }
    if (j.contains("mask") && !j["mask"].is_null()) r.mask = j["mask"].get<std::string>();
    if (j.contains("split") && !j["split"].is_null()) r.split = parse_split(j["split"].get<std::string>());
    if (j.contains("fold") && !j["fold"].is_null()) r.fold = j["fold"].get<int>();
    if (j.contains("source") && !j["source"].is_null()) r.source = j["source"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest: malformed record: ") + e.what());
  }
  if (!std::isfinite(r.age)) throw ValidationError("manifest: record '" + r.id + "' has a non-finite age");
  return r;
}

inline void validate(const Manifest& m) {
  std::set<std::string> seen;
  for (const auto& r : m.records) {
    if (r.id.empty()) throw ValidationError("manifest: empty id");
    if (!seen.insert(r.id).second) throw ValidationError("manifest: duplicate id '" + r.id + "'");
    if (r.fold && (*r.fold < 0 || r.split != Split::kTrain))
      throw ValidationError("manifest: fold labels belong to train records only ('" + r.id + "')");
  }
}

inline void check_ages(const Manifest& m, const ah::AgeBinning& bins) {
  for (const auto& r : m.records)
    if (!bins.contains(r.age))
      throw ValidationError("manifest: age " + std::to_string(r.age) + " of '" + r.id + "' lies outside the binning range [" +
                            std::to_string(bins.start) + ", " + std::to_string(static_cast<int>(bins.last())) + "]");
}

inline Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  Manifest m;
  m.root = std::filesystem::path(path).parent_path();
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(path + ":" + std::to_string(n) + ": " + e.what());
    }
    m.records.push_back(parse_record(j));
  }
  validate(m);
  return m;
}

inline void write_manifest(const std::string& path, const Manifest& m) {
  validate(m);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path);
  for (const auto& r : m.records) out << record_json(r).dump() << "\n";
  if (!out) throw IoError("failed writing manifest " + path);
}

// Largest-remainder apportionment of n items; ties go to the earlier part.
inline std::vector<std::size_t> apportion(std::size_t n, const std::vector<double>& ratios) {
  if (ratios.empty()) throw ValidationError("apportion: no ratios");
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ValidationError("split ratios must be non-negative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");
  std::vector<std::size_t> count(ratios.size());
  std::vector<double> rem(ratios.size());
  std::size_t used = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double exact = static_cast<double>(n) * ratios[i];
    count[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[i] = exact - static_cast<double>(count[i]);
    used += count[i];
  }
  std::vector<std::size_t> order(ratios.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; used < n; ++k, ++used) ++count[order[k % order.size()]];
  return count;
}

struct SplitRatios {
  double train = 0.6, val = 0.2, test = 0.2;
};

// Seeded shuffle, then contiguous train/val/test blocks. Clears fold labels.
inline Manifest split(Manifest m, const SplitRatios& r = {}, std::uint64_t seed = 0) {
  if (m.records.empty()) throw ValidationError("split: empty manifest");
  const auto count = apportion(m.size(), {r.train, r.val, r.test});
  std::vector<std::size_t> order(m.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::size_t k = 0;
  for (std::size_t part = 0; part < 3; ++part)
    for (std::size_t j = 0; j < count[part]; ++j, ++k) {
      auto& rec = m.records[order[k]];
      rec.split = static_cast<Split>(part);
      rec.fold.reset();
    }
  return m;
}

// Fold label per position in [0, n): shuffled, sizes differ by at most one.
inline std::vector<int> kfold(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("kfold: K must be at least 2");
  if (k > n) throw ValidationError("kfold: K=" + std::to_string(k) + " exceeds " + std::to_string(n) + " samples");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<int> fold(n);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    for (std::size_t j = 0; j < size; ++j) fold[order[pos++]] = static_cast<int>(f);
  }
  return fold;
}

inline void assign_folds(Manifest& m, std::size_t k, std::uint64_t seed) {
  const auto train = m.indices(Split::kTrain);
  const auto fold = kfold(train.size(), k, seed);
  for (auto& r : m.records) r.fold.reset();
  for (std::size_t i = 0; i < train.size(); ++i) m.records[train[i]].fold = fold[i];
}

struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0, unassigned = 0;
};

inline SplitCounts split_counts(const Manifest& m) {
  SplitCounts c;
  for (const auto& r : m.records) {
    if (!r.split) ++c.unassigned;
    else if (*r.split == Split::kTrain) ++c.train;
    else if (*r.split == Split::kVal) ++c.val;
    else ++c.test;
  }
  return c;
}

}  // namespace occage::pl
