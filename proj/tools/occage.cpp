#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "occage/core/alloc.hpp"
#include "occage/facegeom/facegeom.hpp"
#include "occage/facegeom/image_io.hpp"
#include "occage/pipeline/gradsuite.hpp"
#include "occage/pipeline/pipeline.hpp"
#include "occage/pipeline/workflow.hpp"

namespace fs = std::filesystem;
using namespace occage;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string config;
  std::string preset = "toy";
};

nlohmann::json config_doc(const Globals& g) { return g.config.empty() ? nlohmann::json::object() : pl::read_json(g.config); }

// A section named `key` wins; otherwise the whole document is the section.
nlohmann::json section(const nlohmann::json& doc, const char* key) { return doc.contains(key) ? doc.at(key) : doc; }

ip::InpaintConfig inpaint_config(const Globals& g) {
  ip::InpaintConfig c = g.preset == "paper" ? ip::InpaintConfig::paper() : ip::InpaintConfig::toy();
  from_json(section(config_doc(g), "inpaint"), c);
  c.validate();
  return c;
}

pl::TrainConfig age_config(const Globals& g) {
  pl::TrainConfig c = pl::TrainConfig::for_preset(g.preset);
  from_json(section(config_doc(g), "age"), c);
  if (g.seed_given) c.seed = g.seed;
  c.validate();
  return c;
}

std::uint64_t seed_of(const Globals& g, std::uint64_t fallback) { return g.seed_given ? g.seed : fallback; }

void note(const std::string& s) { std::cerr << s << std::endl; }

std::string abs_path(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

std::vector<std::size_t> selected(const pl::Manifest& m, const std::string& split) {
  if (split == "all") {
    std::vector<std::size_t> idx(m.size());
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
  }
  return m.indices(pl::parse_split(split));
}

// ---- synth-data -------------------------------------------------------------

void synth_data(const Globals& g, const std::string& out, std::size_t count, std::size_t size) {
  const auto m = pl::synthesize(out, count, size, g.seed);
  const auto c = pl::split_counts(m);
  std::cout << "wrote " << m.size() << " faces to " << out << "/manifest.jsonl (train " << c.train << ", val " << c.val
            << ", test " << c.test << ")\n";
}

// ---- occlude ----------------------------------------------------------------

void occlude(const std::string& manifest, const std::string& region, std::optional<double> pad_x,
             std::optional<double> pad_y, const std::string& out) {
  const auto m = pl::read_manifest(manifest);
  pl::ensure_dir(fs::path(out) / "images");
  pl::ensure_dir(fs::path(out) / "masks");
  const fg::Region reg = fg::parse_region(region);
  const fg::OcclusionSpec base = reg == fg::Region::kEyes ? fg::OcclusionSpec::eyes() : fg::OcclusionSpec::mouth();
  pl::Manifest res;
  res.root = out;
  for (const auto& r : m.records) {
    const fg::Image img = fg::to_rgb(fg::read_image(m.resolve(r.image)));
    fg::OcclusionSpec spec = base.scaled_to(img.height);
    if (pad_x) spec.pad_x = *pad_x;
    if (pad_y) spec.pad_y = *pad_y;
    spec.validate();
    const auto o = fg::apply_occlusion(img, fg::occlusion_rect(r.landmarks, spec, img.height, img.width));
    pl::Record q = r;
    q.image = "images/" + r.id + ".png";
    q.mask = "masks/" + r.id + ".png";
    q.source = abs_path(m.resolve(r.image));
    fg::write_png(res.resolve(q.image), o.image);
    fg::write_png(res.resolve(*q.mask), o.mask);
    res.records.push_back(std::move(q));
  }
  pl::write_manifest((fs::path(out) / "manifest.jsonl").string(), res);
  std::cout << "occluded " << res.size() << " images (" << region << ") into " << out << "\n";
}

// ---- train-inpaint / inpaint ------------------------------------------------

std::vector<ip::InpaintSample> samples_from(const pl::Manifest& m, const std::vector<std::string>& regions,
                                            std::size_t size) {
  const bool occluded = std::all_of(m.records.begin(), m.records.end(), [](const pl::Record& r) { return r.mask && r.source; });
  if (!occluded) {
    std::vector<fg::OcclusionSpec> specs;
    for (const auto& r : regions)
      specs.push_back(fg::parse_region(r) == fg::Region::kEyes ? fg::OcclusionSpec::eyes() : fg::OcclusionSpec::mouth());
    return pl::inpaint_training_set(m, pl::load_faces(m, size), specs);
  }
  auto idx = m.indices(pl::Split::kTrain);
  if (idx.empty()) idx = selected(m, "all");
  std::vector<ip::InpaintSample> out;
  for (auto i : idx) {
    const auto& r = m.records[i];
    out.push_back({fg::resize(fg::to_rgb(fg::read_image(m.resolve(*r.source))), size, size),
                   fg::resize(fg::to_rgb(fg::read_image(m.resolve(r.image))), size, size),
                   fg::resize_mask(fg::read_mask(m.resolve(*r.mask)), size, size)});
  }
  return out;
}

void train_inpaint(const Globals& g, const std::string& manifest, const std::vector<std::string>& regions,
                   const std::string& out) {
  const auto cfg = inpaint_config(g);
  const auto m = pl::read_manifest(manifest);
  const auto data = samples_from(m, regions, cfg.image_size);
  note("training inpainter on " + std::to_string(data.size()) + " samples for " + std::to_string(cfg.iterations) + " iterations");
  Rng rng(seed_of(g, 0));
  const std::size_t every = std::max<std::size_t>(1, cfg.iterations / 10);
  const auto res = ip::train_inpainter(data, cfg, rng, [&](const ip::InpaintTraceRow& t) {
    if (t.iteration % every == 0 || t.iteration + 1 == cfg.iterations)
      note("iter " + std::to_string(t.iteration) + " d " + std::to_string(t.d_loss) + " masked_l1 " + std::to_string(t.masked_l1));
  });
  if (fs::path(out).has_parent_path()) pl::ensure_dir(fs::path(out).parent_path());
  ip::save_inpainter(out, res.model);
  pl::write_text(out + ".trace.json", ip::trace_to_json(res.trace).dump(1));
  std::cout << "saved " << out << " (masked l1 " << res.trace.front().masked_l1 << " -> " << res.trace.back().masked_l1
            << ")\n";
}

void inpaint(const std::string& ckpt, const std::string& manifest, const std::string& out) {
  const auto model = ip::load_inpainter(ckpt);
  const auto m = pl::read_manifest(manifest);
  const std::size_t si = model.config.image_size;
  std::vector<ip::InpaintSample> data;
  std::vector<fg::Image> occluded;
  std::vector<fg::Mask> masks;
  bool have_sources = true;
  for (const auto& r : m.records) {
    if (!r.mask) throw ValidationError("inpaint: record '" + r.id + "' has no mask; run occlude first");
    occluded.push_back(fg::to_rgb(fg::read_image(m.resolve(r.image))));
    masks.push_back(fg::read_mask(m.resolve(*r.mask)));
    const auto& o = occluded.back();
    if (masks.back().height != o.height || masks.back().width != o.width)
      throw ValidationError("inpaint: mask of '" + r.id + "' does not match its image");
    have_sources = have_sources && r.source.has_value();
    const fg::Image orig = r.source ? fg::to_rgb(fg::read_image(m.resolve(*r.source))) : o;
    data.push_back({fg::resize(orig, si, si), fg::resize(o, si, si), fg::resize_mask(masks.back(), si, si)});
  }
  const auto rec = ip::reconstruct(model, data);
  pl::ensure_dir(out);
  pl::Manifest res;
  res.root = out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& o = occluded[i];
    pl::Record q = m.records[i];
    q.image = q.id + ".png";
    q.mask = abs_path(m.resolve(*q.mask));
    if (q.source) q.source = abs_path(m.resolve(*q.source));
    fg::write_png(res.resolve(q.image), fg::composite(o, fg::resize(rec.refined[i], o.height, o.width), masks[i]));
    res.records.push_back(std::move(q));
  }
  pl::write_manifest((fs::path(out) / "manifest.jsonl").string(), res);
  std::cout << "wrote " << res.size() << " composited images to " << out;
  if (have_sources) std::cout << " (masked l1 " << rec.masked_l1 << ")";
  std::cout << "\n";
}

// ---- train-age / predict-age ------------------------------------------------

void train_age(const Globals& g, const std::string& manifest, const std::string& out) {
  const auto cfg = age_config(g);
  const auto m = pl::read_manifest(manifest);
  pl::check_ages(m, cfg.bins());
  const auto images = pl::load_images(m, cfg.backbone().image_size);
  const auto res = pl::train_age(m, images, cfg, out, [&](int fold, const pl::EpochLog& e) {
    note("fold " + std::to_string(fold) + " epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.train_loss) +
         " val mae " + std::to_string(e.val_mae) + " lr " + std::to_string(e.lr));
  });
  pl::write_text((fs::path(out) / "run_record.json").string(), nlohmann::json(res.record).dump(1) + "\n");
  std::cout << "baseline mae " << res.record.baseline_mae;
  for (const auto& [mode, mae] : res.record.test_mae) std::cout << ", " << mode << " " << mae;
  std::cout << "\n";
}

std::vector<std::string> checkpoint_paths(const std::vector<std::string>& given) {
  std::vector<std::string> out;
  for (const auto& p : given) {
    if (!fs::is_directory(p)) {
      out.push_back(p);
      continue;
    }
    std::vector<std::string> found;
    for (const auto& e : fs::directory_iterator(p))
      if (e.path().extension() == ".ckpt") found.push_back(e.path().string());
    std::sort(found.begin(), found.end());
    out.insert(out.end(), found.begin(), found.end());
  }
  if (out.empty()) throw IoError("predict-age: no checkpoints found");
  return out;
}

void predict_age(const Globals& g, const std::vector<std::string>& ckpts, const std::string& manifest,
                 const std::string& split, const std::string& out) {
  const auto cfg = age_config(g);
  std::vector<ah::AgeModel> models;
  for (const auto& p : checkpoint_paths(ckpts)) models.push_back(ah::load_age_model(p));
  const std::size_t size = models.front().config().image_size;
  for (const auto& mdl : models)
    if (mdl.config().image_size != size) throw ValidationError("predict-age: checkpoints disagree on input size");
  const auto m = pl::read_manifest(manifest);
  const auto idx = selected(m, split);
  if (idx.empty()) throw ValidationError("predict-age: no records in split '" + split + "'");
  const auto preds = pl::ensemble_predict(models, m, pl::load_images(m, size), idx, cfg.blend_lambda, cfg.batch_size);
  std::ofstream f(out);
  if (!f) throw IoError("cannot write " + out);
  f << "id,truth,regression,expectation,blended\n";
  f.precision(17);
  for (const auto& p : preds) f << p.id << ',' << p.truth << ',' << p.regression << ',' << p.expectation << ',' << p.blend << '\n';
  if (!f) throw IoError("failed writing " + out);
  std::cout << "wrote " << preds.size() << " predictions from " << models.size() << " models to " << out << "\n";
}

// ---- eval-recon / eval-age --------------------------------------------------

void eval_recon(const std::string& orig, const std::string& recon, const std::string& out, bool global_ssim,
                const std::string& dataset, const std::string& occlusion, const std::string& regime) {
  if (!fs::is_directory(orig)) throw IoError("not a directory: " + orig);
  if (!fs::is_directory(recon)) throw IoError("not a directory: " + recon);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(recon)) {
    const auto ext = e.path().extension().string();
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("eval-recon: no images in " + recon);
  ev::SsimOptions so;
  so.windowed = !global_ssim;
  nlohmann::json pairs = nlohmann::json::array();
  double psnr = 0.0, ssim = 0.0;
  for (const auto& p : files) {
    const auto o = fs::path(orig) / p.filename();
    if (!fs::exists(o)) throw IoError("eval-recon: no original for " + p.filename().string());
    const fg::Image a = fg::to_rgb(fg::read_image(o.string())), b = fg::to_rgb(fg::read_image(p.string()));
    const double ps = ev::psnr(a, b), ss = ev::ssim(a, b, so);
    pairs.push_back({{"file", p.filename().string()}, {"psnr", ev::detail::metric_json(ps)}, {"ssim", ss}});
    psnr += ps;
    ssim += ss;
  }
  const double n = static_cast<double>(files.size());
  const ev::MetricReport r{dataset, occlusion, regime, psnr / n, ssim / n, std::nullopt, files.size()};
  pl::write_text(out, nlohmann::json{{"reports", ev::reports_json({r})}, {"pairs", pairs}}.dump(2) + "\n");
  std::cout << ev::format_table({r});
}

void eval_age(const std::string& pred, const std::string& out, const std::string& mode, const std::string& dataset,
              const std::string& occlusion, const std::string& regime) {
  std::ifstream f(pred);
  if (!f) throw IoError("cannot open " + pred);
  std::string line;
  if (!std::getline(f, line) || line.rfind("id,truth,regression,expectation,blended", 0) != 0)
    throw ValidationError(pred + ": expected header id,truth,regression,expectation,blended");
  std::vector<double> truth, reg, expc, blend;
  std::size_t n = 1;
  while (std::getline(f, line)) {
    ++n;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) throw ValidationError(pred + ":" + std::to_string(n) + ": expected 5 columns");
    try {
      truth.push_back(std::stod(cells[1]));
      reg.push_back(std::stod(cells[2]));
      expc.push_back(std::stod(cells[3]));
      blend.push_back(std::stod(cells[4]));
    } catch (const std::exception&) {
      throw ValidationError(pred + ":" + std::to_string(n) + ": malformed number");
    }
  }
  if (truth.empty()) throw ValidationError(pred + ": no predictions");
  const std::map<std::string, double> maes{
      {"regression", ev::mae(reg, truth)}, {"expectation", ev::mae(expc, truth)}, {"blend", ev::mae(blend, truth)}};
  const std::string key = mode == "blended" ? "blend" : mode;
  if (!maes.count(key)) throw ValidationError("eval-age: unknown mode '" + mode + "'");
  const ev::MetricReport r{dataset, occlusion, regime, std::nullopt, std::nullopt, maes.at(key), truth.size()};
  pl::write_text(out, nlohmann::json{{"reports", ev::reports_json({r})}, {"mae", maes}}.dump(2) + "\n");
  std::cout << ev::format_table({r});
}

// ---- run-all / gradcheck ----------------------------------------------------

void run_all(const Globals& g, const std::string& manifest, const std::string& out) {
  pl::RunAllConfig cfg = pl::RunAllConfig::for_preset(g.preset);
  from_json(config_doc(g), cfg);
  if (g.seed_given) {
    cfg.seed = g.seed;
    cfg.age.seed = g.seed;
  }
  cfg.validate();
  pl::Manifest m;
  if (manifest.empty()) {
    note("synthesizing " + std::to_string(cfg.faces) + " faces");
    m = pl::synthesize((fs::path(out) / "data").string(), cfg.faces, cfg.face_size, cfg.seed);
  } else {
    m = pl::read_manifest(manifest);
    if (pl::split_counts(m).unassigned) m = pl::split(std::move(m), {}, cfg.seed);
  }
  const auto res = pl::run_all(m, cfg, out, note);
  std::cout << ev::format_table(res.record.reports);
}

int gradcheck(const std::string& filter, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = pl::run_gradient_suite(filter, [](const pl::GradResult& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-26s %s  max rel %.3e  tol %.0e  checked %zu", r.name.c_str(), r.passed() ? "ok  " : "FAIL",
                  r.max_rel_error, r.tolerance, r.checked);
    std::cout << buf << std::endl;
  });
  if (results.empty()) throw ValidationError("gradcheck: no case matches '" + filter + "'");
  const auto failed = std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.passed(); });
  std::cout << results.size() - failed << "/" << results.size() << " passed in "
            << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s\n";
  if (!out.empty()) pl::write_text(out, nlohmann::json(results).dump(2) + "\n");
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  CLI::App app{"Occluded-face age estimation: occlusion, inpainting, age models and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->each([&](const std::string&) { g.seed_given = true; });
  app.add_option("--config", g.config, "JSON config overlaying the preset");
  app.add_option("--preset", g.preset, "Shape regime")->check(CLI::IsMember({"paper", "toy"}));

  std::string manifest, out, region = "eyes", ckpt, split = "test", orig, recon, pred, mode = "blended", filter;
  std::string dataset = "synthetic", occlusion = "none", regime = "reconstructed";
  std::optional<double> pad_x, pad_y;
  std::size_t count = 200, size = 0;
  bool global_ssim = false;
  std::vector<std::string> regions{"eyes", "mouth"}, ckpts;

  auto* synth = app.add_subcommand("synth-data", "Render synthetic faces and write a split manifest");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--count", count, "Number of faces")->check(CLI::PositiveNumber);
  synth->add_option("--size", size, "Face resolution (default 64, or 256 with the paper preset)");

  auto* occ = app.add_subcommand("occlude", "Occlude faces and write image/mask pairs");
  occ->add_option("--manifest", manifest, "Input manifest")->required();
  occ->add_option("--region", region, "eyes or mouth")->check(CLI::IsMember({"eyes", "mouth"}));
  occ->add_option("--pad-x", pad_x, "Horizontal pad in pixels (default scales with the image)");
  occ->add_option("--pad-y", pad_y, "Vertical pad in pixels (default scales with the image)");
  occ->add_option("--out", out, "Output directory")->required();

  auto* tinp = app.add_subcommand("train-inpaint", "Train the inpainting network");
  tinp->add_option("--manifest", manifest, "Plain or occluded manifest")->required();
  tinp->add_option("--out", out, "Checkpoint path")->required();
  tinp->add_option("--region", regions, "Regions to occlude for plain manifests");

  auto* inp = app.add_subcommand("inpaint", "Reconstruct occluded images");
  inp->add_option("--ckpt", ckpt, "Inpainter checkpoint")->required();
  inp->add_option("--manifest", manifest, "Occluded manifest")->required();
  inp->add_option("--out", out, "Output directory")->required();

  auto* tage = app.add_subcommand("train-age", "K-fold training of the age model");
  tage->add_option("--manifest", manifest, "Manifest with splits")->required();
  tage->add_option("--out", out, "Output directory")->required();

  auto* page = app.add_subcommand("predict-age", "Ensemble age predictions to CSV");
  page->add_option("--ckpt", ckpts, "Checkpoint files or directories")->required();
  page->add_option("--manifest", manifest, "Manifest")->required();
  page->add_option("--split", split, "train, val, test or all")->check(CLI::IsMember({"train", "val", "test", "all"}));
  page->add_option("--out", out, "CSV path")->required();

  auto* erec = app.add_subcommand("eval-recon", "PSNR and SSIM between image directories");
  erec->add_option("--orig", orig, "Originals")->required();
  erec->add_option("--recon", recon, "Reconstructions")->required();
  erec->add_option("--out", out, "Report path")->required();
  erec->add_flag("--global-ssim", global_ssim, "Single-window SSIM over the whole image");

  auto* eage = app.add_subcommand("eval-age", "MAE of a prediction CSV");
  eage->add_option("--pred", pred, "Prediction CSV")->required();
  eage->add_option("--out", out, "Report path")->required();
  eage->add_option("--mode", mode, "Prediction column")->check(CLI::IsMember({"regression", "expectation", "blended"}));

  for (auto* sc : {erec, eage}) {
    sc->add_option("--dataset", dataset, "Dataset label");
    sc->add_option("--occlusion", occlusion, "Occlusion label")->check(CLI::IsMember({"none", "eyes", "mouth"}));
    sc->add_option("--regime", regime, "Regime label")->check(CLI::IsMember({"original", "occluded", "reconstructed"}));
  }

  auto* all = app.add_subcommand("run-all", "Occlude, inpaint, evaluate and train age models end to end");
  all->add_option("--manifest", manifest, "Manifest (default: synthesize faces)");
  all->add_option("--out", out, "Output directory")->required();

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  grad->add_option("--filter", filter, "Only cases whose name contains this");
  grad->add_option("--out", out, "JSON results path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) synth_data(g, out, count, size ? size : (g.preset == "paper" ? 256 : 64));
    else if (*occ) occlude(manifest, region, pad_x, pad_y, out);
    else if (*tinp) train_inpaint(g, manifest, regions, out);
    else if (*inp) inpaint(ckpt, manifest, out);
    else if (*tage) train_age(g, manifest, out);
    else if (*page) predict_age(g, ckpts, manifest, split, out);
    else if (*erec) eval_recon(orig, recon, out, global_ssim, dataset, occlusion, regime);
    else if (*eage) eval_age(pred, out, mode, dataset, occlusion, regime);
    else if (*all) run_all(g, manifest, out);
    else if (*grad) return gradcheck(filter, out);
    return 0;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
