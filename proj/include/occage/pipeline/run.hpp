#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "occage/evalkit/evalkit.hpp"
#include "occage/facegeom/occlusion.hpp"
#include "occage/inpaint/train.hpp"
#include "occage/pipeline/train.hpp"

namespace occage::pl {

enum class Regime { kOriginal, kOccluded, kReconstructed };

inline std::string to_string(Regime r) {
  switch (r) {
    case Regime::kOriginal: return "original";
    case Regime::kOccluded: return "occluded";
    case Regime::kReconstructed: return "reconstructed";
  }
  return "?";
}

inline Regime parse_regime(const std::string& s) {
  if (s == "original") return Regime::kOriginal;
  if (s == "occluded") return Regime::kOccluded;
  if (s == "reconstructed") return Regime::kReconstructed;
  throw ValidationError("unknown regime '" + s + "' (expected original, occluded or reconstructed)");
}

struct PipelineOptions {
  std::string dataset = "synthetic";
  std::vector<fg::OcclusionSpec> occlusions{fg::OcclusionSpec::eyes(), fg::OcclusionSpec::mouth()};
  std::vector<Regime> regimes{Regime::kOriginal, Regime::kOccluded, Regime::kReconstructed};
  TrainConfig age;
};

struct PipelineRecord {
  std::vector<StageLog> stages;
  std::map<std::string, RunRecord> runs;  // keyed "<occlusion>/<regime>"
  std::vector<ev::MetricReport> reports;
};

inline void to_json(nlohmann::json& j, const PipelineRecord& p) {
  j = {{"stages", p.stages}, {"runs", p.runs}, {"reports", ev::reports_json(p.reports)}};
}

// Source face rescaled to the age model's input, landmarks following.
struct Face {
  fg::Image image;
  fg::LandmarkSet landmarks;
};

inline std::vector<Face> load_faces(const Manifest& m, std::size_t size) {
  std::vector<Face> out;
  out.reserve(m.size());
  for (const auto& r : m.records) {
    const fg::Image src = fg::to_rgb(fg::read_image(m.resolve(r.image)));
    out.push_back({fg::resize(src, size, size), fg::resize_landmarks(r.landmarks, src.height, src.width, size, size)});
  }
  return out;
}

struct OccludedSet {
  std::vector<fg::Image> images;
  std::vector<fg::Mask> masks;
};

inline OccludedSet occlude_faces(const std::vector<Face>& faces, const fg::OcclusionSpec& spec) {
  OccludedSet out;
  for (const auto& f : faces) {
    const std::size_t s = f.image.height;
    auto o = fg::apply_occlusion(f.image, fg::occlusion_rect(f.landmarks, spec.scaled_to(s), s, f.image.width));
    out.images.push_back(std::move(o.image));
    out.masks.push_back(std::move(o.mask));
  }
  return out;
}

// Runs the inpainter at its own resolution and pastes its output, rescaled,
// into the occluded region of each full-resolution image.
inline std::vector<fg::Image> reconstruct_faces(const ip::Inpainter& model, const std::vector<Face>& faces,
                                                const OccludedSet& occ, double* masked_l1 = nullptr) {
  const std::size_t si = model.config.image_size;
  std::vector<ip::InpaintSample> data;
  for (std::size_t i = 0; i < faces.size(); ++i)
    data.push_back({fg::resize(faces[i].image, si, si), fg::resize(occ.images[i], si, si), fg::resize_mask(occ.masks[i], si, si)});
  const auto rec = ip::reconstruct(model, data);
  if (masked_l1) *masked_l1 = rec.masked_l1;
  std::vector<fg::Image> out;
  for (std::size_t i = 0; i < faces.size(); ++i) {
    const auto& o = occ.images[i];
    out.push_back(fg::composite(o, fg::resize(rec.refined[i], o.height, o.width), occ.masks[i]));
  }
  return out;
}

struct QualityMeans {
  double psnr = 0.0, ssim = 0.0;
};

inline QualityMeans mean_quality(const std::vector<Face>& faces, const std::vector<fg::Image>& images,
                                 const std::vector<std::size_t>& idx) {
  QualityMeans q;
  for (auto i : idx) {
    q.psnr += ev::psnr(faces[i].image, images[i]);
    q.ssim += ev::ssim(faces[i].image, images[i]);
  }
  q.psnr /= static_cast<double>(idx.size());
  q.ssim /= static_cast<double>(idx.size());
  return q;
}

// Occlude, optionally inpaint, score reconstructions on the test split, then
// train and score the age model for every requested regime. `inpainter` may
// be null when no reconstructed regime is requested.
inline PipelineRecord run_pipeline(const Manifest& m, const std::vector<Face>& faces, const ip::Inpainter* inpainter,
                                   const PipelineOptions& opt, const std::string& out_dir = "",
                                   const EpochProgress& progress = {}) {
  validate(m);
  opt.age.validate();
  if (faces.size() != m.size()) throw ValidationError("run_pipeline: one face per manifest record required");
  const bool want_recon = std::find(opt.regimes.begin(), opt.regimes.end(), Regime::kReconstructed) != opt.regimes.end();
  if (want_recon && !inpainter) throw ValidationError("run_pipeline: reconstructed regime requested without an inpainter");
  check_no_leakage(m);

  PipelineRecord out;
  const auto test = m.indices(Split::kTest);
  if (test.empty()) throw ValidationError("run_pipeline: manifest has no test records");
  out.stages.push_back({"load", {{"records", m.size()}, {"test", test.size()}, {"size", faces.front().image.height}}});

  auto train = [&](const std::string& key, const std::vector<fg::Image>& images) {
    const std::string dir = out_dir.empty() ? "" : (std::filesystem::path(out_dir) / key).string();
    auto res = train_age(m, images, opt.age, dir, progress);
    for (auto& f : res.record.folds)
      if (!f.checkpoint.empty()) f.checkpoint = (std::filesystem::path(key) / f.checkpoint).string();
    const double mae = res.record.test_mae.at(ah::to_string(opt.age.select_mode));
    out.runs[key] = std::move(res.record);
    return mae;
  };

  if (std::find(opt.regimes.begin(), opt.regimes.end(), Regime::kOriginal) != opt.regimes.end()) {
    std::vector<fg::Image> images;
    for (const auto& f : faces) images.push_back(f.image);
    const double mae = train("none/original", images);
    out.reports.push_back({opt.dataset, "none", "original", std::nullopt, std::nullopt, mae, test.size()});
  }

  for (const auto& spec : opt.occlusions) {
    const std::string region = fg::to_string(spec.region);
    const auto occ = occlude_faces(faces, spec);
    double area = 0.0;
    for (const auto& mk : occ.masks) area += static_cast<double>(mk.occluded_count()) / static_cast<double>(mk.data.size());
    out.stages.push_back({"occlude", {{"region", region}, {"mean_area", area / static_cast<double>(occ.masks.size())}}});

    for (Regime regime : opt.regimes) {
      if (regime == Regime::kOriginal) continue;
      std::vector<fg::Image> images;
      if (regime == Regime::kOccluded) {
        images = occ.images;
      } else {
        double l1 = 0.0;
        images = reconstruct_faces(*inpainter, faces, occ, &l1);
        out.stages.push_back({"inpaint", {{"region", region}, {"masked_l1", l1}}});
      }
      const auto q = mean_quality(faces, images, test);
      out.stages.push_back({"eval_recon", {{"region", region}, {"regime", to_string(regime)}, {"psnr", ev::detail::metric_json(q.psnr)}, {"ssim", q.ssim}}});
      const double mae = train(region + "/" + to_string(regime), images);
      out.reports.push_back({opt.dataset, region, to_string(regime), q.psnr, q.ssim, mae, test.size()});
    }
  }
  ev::sort_reports(out.reports);
  out.stages.push_back({"eval_age", {{"reports", out.reports.size()}}});
  return out;
}

}  // namespace occage::pl
