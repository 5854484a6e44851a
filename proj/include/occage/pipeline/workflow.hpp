#pragma once

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "occage/facegeom/image_io.hpp"
#include "occage/facegeom/synthetic.hpp"
#include "occage/inpaint/train.hpp"
#include "occage/pipeline/run.hpp"

namespace occage::pl {

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline void ensure_dir(const std::filesystem::path& p) {
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

inline std::string face_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "face_%04zu", i);
  return buf;
}

// Renders `count` synthetic faces into dir/images, splits them and writes
// dir/manifest.jsonl. Image paths are stored relative to dir.
inline Manifest synthesize(const std::string& dir, std::size_t count, std::size_t size, std::uint64_t seed,
                           const SplitRatios& ratios = {}) {
  if (count == 0) throw ValidationError("synth-data: count must be positive");
  ensure_dir(std::filesystem::path(dir) / "images");
  Manifest m;
  m.root = dir;
  for (std::size_t i = 0; i < count; ++i) {
    const auto f = fg::synthetic_face((seed << 32) ^ i, size);
    Record r;
    r.id = face_id(i);
    r.image = "images/" + r.id + ".png";
    r.age = f.age;
    r.landmarks = f.landmarks;
    fg::write_png(m.resolve(r.image), f.image);
    m.records.push_back(std::move(r));
  }
  m = split(std::move(m), ratios, seed);
  write_manifest((std::filesystem::path(dir) / "manifest.jsonl").string(), m);
  return m;
}

struct RunAllConfig {
  std::string dataset = "synthetic";
  std::size_t faces = 200;      // synthetic faces generated when no manifest is given
  std::size_t face_size = 64;   // rendered resolution of those faces
  std::vector<std::string> regions{"eyes", "mouth"};
  std::vector<std::string> regimes{"original", "occluded", "reconstructed"};
  std::uint64_t seed = 0;
  ip::InpaintConfig inpaint = ip::InpaintConfig::toy();
  TrainConfig age = TrainConfig::toy();

  static RunAllConfig for_preset(const std::string& p) {
    RunAllConfig c;
    c.age = TrainConfig::for_preset(p);
    if (p == "paper") {
      c.inpaint = ip::InpaintConfig::paper();
      c.face_size = 256;
    }
    return c;
  }

  std::vector<fg::OcclusionSpec> occlusions() const {
    std::vector<fg::OcclusionSpec> out;
    for (const auto& r : regions)
      out.push_back(fg::parse_region(r) == fg::Region::kEyes ? fg::OcclusionSpec::eyes() : fg::OcclusionSpec::mouth());
    return out;
  }

  std::vector<Regime> regime_list() const {
    std::vector<Regime> out;
    for (const auto& r : regimes) out.push_back(parse_regime(r));
    return out;
  }

  bool wants(Regime r) const {
    const auto l = regime_list();
    return std::find(l.begin(), l.end(), r) != l.end();
  }

  void validate() const {
    if (faces == 0) throw ValidationError("run config: faces must be positive");
    if (face_size < 64) throw ValidationError("run config: face_size must be at least 64");
    if (regimes.empty()) throw ValidationError("run config: no regimes");
    occlusions();
    regime_list();
    if (wants(Regime::kReconstructed) || wants(Regime::kOccluded))
      if (regions.empty()) throw ValidationError("run config: occluded regimes need at least one region");
    if (wants(Regime::kReconstructed)) inpaint.validate();
    age.validate();
  }
};

inline void to_json(nlohmann::json& j, const RunAllConfig& c) {
  j = {{"dataset", c.dataset}, {"faces", c.faces},   {"face_size", c.face_size}, {"regions", c.regions},
       {"regimes", c.regimes}, {"seed", c.seed},     {"inpaint", c.inpaint},     {"age", c.age}};
}

// Overlays the keys present in j.
inline void from_json(const nlohmann::json& j, RunAllConfig& c) {
  static const std::set<std::string> known{"dataset", "faces", "face_size", "regions", "regimes", "seed", "inpaint", "age"};
  if (!j.is_object()) throw ValidationError("run config: expected a JSON object");
  for (const auto& item : j.items())
    if (!known.count(item.key())) throw ValidationError("run config: unknown key '" + item.key() + "'");
  try {
    auto get = [&](const char* k, auto& field) {
      if (j.contains(k)) j.at(k).get_to(field);
    };
    get("dataset", c.dataset);
    get("faces", c.faces);
    get("face_size", c.face_size);
    get("regions", c.regions);
    get("regimes", c.regimes);
    get("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("run config: ") + e.what());
  }
  if (j.contains("inpaint")) from_json(j.at("inpaint"), c.inpaint);
  if (j.contains("age")) from_json(j.at("age"), c.age);
}

// Every train record (all records if none are marked) occluded by every
// region, at the inpainter's resolution.
inline std::vector<ip::InpaintSample> inpaint_training_set(const Manifest& m, const std::vector<Face>& faces,
                                                           const std::vector<fg::OcclusionSpec>& specs) {
  auto idx = m.indices(Split::kTrain);
  if (idx.empty() && split_counts(m).unassigned == m.size()) {
    idx.resize(m.size());
    std::iota(idx.begin(), idx.end(), 0);
  }
  if (idx.empty()) throw ValidationError("inpaint: manifest has no train records");
  std::vector<Face> subset;
  for (auto i : idx) subset.push_back(faces[i]);
  std::vector<ip::InpaintSample> out;
  for (const auto& spec : specs) {
    const auto occ = occlude_faces(subset, spec);
    for (std::size_t k = 0; k < subset.size(); ++k) out.push_back({subset[k].image, occ.images[k], occ.masks[k]});
  }
  return out;
}

struct RunAllResult {
  PipelineRecord record;
  std::vector<ip::InpaintTraceRow> inpaint_trace;
};

using StageProgress = std::function<void(const std::string&)>;

// Trains the inpainter on the train split, then runs every regime. With a
// non-empty out_dir writes report.json, run_record.json, the inpainter
// checkpoint and per-regime age checkpoints.
inline RunAllResult run_all(const Manifest& m, const RunAllConfig& cfg, const std::string& out_dir = "",
                            const StageProgress& log = {}) {
  cfg.validate();
  validate(m);
  check_ages(m, cfg.age.bins());
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  if (!out_dir.empty()) ensure_dir(out_dir);
  const std::filesystem::path out(out_dir);

  RunAllResult res;
  std::optional<ip::Inpainter> inpainter;
  std::size_t inpaint_samples = 0;
  if (cfg.wants(Regime::kReconstructed)) {
    say("loading faces at " + std::to_string(cfg.inpaint.image_size) + " for the inpainter");
    const auto samples = inpaint_training_set(m, load_faces(m, cfg.inpaint.image_size), cfg.occlusions());
    inpaint_samples = samples.size();
    say("training inpainter on " + std::to_string(samples.size()) + " samples for " + std::to_string(cfg.inpaint.iterations) +
        " iterations");
    Rng rng(cfg.seed);
    auto trained = ip::train_inpainter(samples, cfg.inpaint, rng);
    res.inpaint_trace = std::move(trained.trace);
    inpainter = std::move(trained.model);
    if (!out_dir.empty()) {
      ip::save_inpainter((out / "inpainter.ckpt").string(), *inpainter);
      write_text((out / "inpaint_trace.json").string(), ip::trace_to_json(res.inpaint_trace).dump(1));
    }
  }

  PipelineOptions opt;
  opt.dataset = cfg.dataset;
  opt.occlusions = cfg.occlusions();
  opt.regimes = cfg.regime_list();
  opt.age = cfg.age;
  say("loading faces at " + std::to_string(cfg.age.backbone().image_size) + " for the age model");
  const auto faces = load_faces(m, cfg.age.backbone().image_size);
  res.record = run_pipeline(m, faces, inpainter ? &*inpainter : nullptr, opt, out_dir.empty() ? "" : (out / "age").string(),
                            [&](int fold, const EpochLog& e) {
                              if (log && e.epoch == cfg.age.epochs)
                                log("fold " + std::to_string(fold) + " done, val mae " + std::to_string(e.val_mae));
                            });
  for (auto& [key, run] : res.record.runs)
    for (auto& f : run.folds)
      if (!f.checkpoint.empty()) f.checkpoint = (std::filesystem::path("age") / f.checkpoint).string();
  if (!res.inpaint_trace.empty())
    res.record.stages.insert(res.record.stages.begin(),
                             {"train_inpaint",
                              {{"samples", inpaint_samples},
                               {"iterations", res.inpaint_trace.size()},
                               {"first_masked_l1", res.inpaint_trace.front().masked_l1},
                               {"last_masked_l1", res.inpaint_trace.back().masked_l1}}});
  if (!out_dir.empty()) {
    write_text((out / "report.json").string(), ev::reports_json(res.record.reports).dump(2) + "\n");
    nlohmann::json rr = res.record;
    rr["config"] = cfg;
    write_text((out / "run_record.json").string(), rr.dump(1) + "\n");
  }
  return res;
}

}  // namespace occage::pl
