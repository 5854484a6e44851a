#pragma once

#include <functional>
#include <numeric>
#include <vector>

#include "occage/facegeom/tensorize.hpp"
#include "occage/inpaint/networks.hpp"

namespace occage::ip {

struct InpaintSample {
  fg::Image original;
  fg::Image occluded;
  fg::Mask mask;
};

struct InpaintTraceRow {
  std::size_t iteration = 0;
  double d_loss = 0.0;
  double g_adversarial = 0.0;
  double l1 = 0.0;         // coarse + refined, whole image
  double masked_l1 = 0.0;  // refined, occluded pixels only
};

struct SigmaCheck {
  std::size_t iteration = 0;
  std::vector<double> sigmas;  // one per discriminator layer
};

struct InpaintTrainResult {
  Inpainter model;
  std::vector<InpaintTraceRow> trace;
  std::vector<SigmaCheck> sigma_checks;
};

struct Batch {
  Tensor original, occluded, mask;
};

inline Batch make_batch(const std::vector<InpaintSample>& data, const std::vector<std::size_t>& idx) {
  std::vector<const fg::Image*> orig, occ;
  std::vector<const fg::Mask*> masks;
  for (auto i : idx) {
    orig.push_back(&data.at(i).original);
    occ.push_back(&data[i].occluded);
    masks.push_back(&data[i].mask);
  }
  return {fg::images_to_tensor(orig), fg::images_to_tensor(occ), fg::masks_to_tensor(masks)};
}

// Mean |a − b| over occluded pixels (all channels), in [-1,1] units.
inline double masked_l1(const Tensor& a, const Tensor& b, const Tensor& m) {
  const auto on = expand_mask(m, a.size(1));
  double s = 0.0, n = 0.0;
  for (std::size_t i = 0; i < on.size(); ++i) {
    s += on[i] * std::abs(a.data()[i] - b.data()[i]);
    n += on[i];
  }
  return n > 0 ? s / n : 0.0;
}

inline void check_dataset(const std::vector<InpaintSample>& data, std::size_t size) {
  if (data.empty()) throw ValidationError("inpaint: empty dataset");
  for (const auto& s : data)
    if (s.original.height != size || s.original.width != size || s.occluded.height != size ||
        s.mask.height != size || s.mask.width != size)
      throw ShapeError("inpaint: every sample must be " + std::to_string(size) + "x" + std::to_string(size));
}

using InpaintProgress = std::function<void(const InpaintTraceRow&)>;

// Alternating hinge-loss updates: one discriminator step, then one generator
// step against the freshly updated discriminator.
inline InpaintTrainResult train_inpainter(const std::vector<InpaintSample>& data, const InpaintConfig& cfg, Rng& rng,
                                          const InpaintProgress& progress = {}) {
  cfg.validate();
  check_dataset(data, cfg.image_size);
  InpaintTrainResult res{Inpainter(cfg, rng), {}, {}};
  Inpainter& model = res.model;
  StateList gs, ds;
  model.collect_generator(gs, "");
  model.disc.collect(ds, "");
  auto g_opt = nc::make_adam(nc::trainable(gs), cfg.lr_generator);
  auto d_opt = nc::make_adam(nc::trainable(ds), cfg.lr_discriminator);
  Rng order = rng.fork(3);

  std::vector<std::size_t> perm(data.size());
  std::size_t cursor = perm.size();
  auto next_batch = [&] {
    std::vector<std::size_t> idx;
    while (idx.size() < std::min(cfg.batch_size, data.size())) {
      if (cursor == perm.size()) {
        std::iota(perm.begin(), perm.end(), 0);
        order.shuffle(perm);
        cursor = 0;
      }
      idx.push_back(perm[cursor++]);
    }
    return idx;
  };

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const Batch b = make_batch(data, next_batch());
    const InpaintOutput out = model.forward(b.occluded, b.mask);

    d_opt.zero_grad();
    const auto d_loss = hinge_losses(model.disc(b.original, b.mask), model.disc(out.composited.detach(), b.mask));
    d_loss.discriminator.backward();
    d_opt.step();

    g_opt.zero_grad();
    const Tensor fake = model.disc(out.composited, b.mask);
    const Tensor g_adv = nc::neg(nc::mean(fake));
    const Tensor l1 = nc::add(nc::mean(nc::abs(nc::sub(out.coarse, b.original))),
                              nc::mean(nc::abs(nc::sub(out.refined, b.original))));
    const Tensor total = nc::add(nc::mul_scalar(g_adv, cfg.adversarial_weight), nc::mul_scalar(l1, cfg.l1_weight));
    total.backward();
    g_opt.step();

    InpaintTraceRow row{it, d_loss.discriminator.item(), g_adv.item(), l1.item(),
                        masked_l1(out.refined, b.original, b.mask)};
    res.trace.push_back(row);
    if (progress) progress(row);
    if (cfg.sigma_check_every && (it % cfg.sigma_check_every == 0 || it + 1 == cfg.iterations))
      res.sigma_checks.push_back({it, model.disc.layer_sigmas()});
  }
  return res;
}

struct Reconstruction {
  std::vector<fg::Image> refined;     // raw network output
  std::vector<fg::Image> composited;  // refined inside the mask, original outside
  double masked_l1 = 0.0;             // against originals, [-1,1] units
};

inline Reconstruction reconstruct(const Inpainter& model, const std::vector<InpaintSample>& data,
                                  std::size_t batch = 16) {
  check_dataset(data, model.config.image_size);
  nc::NoGradGuard ng;
  Reconstruction r;
  double weighted = 0.0, pixels = 0.0;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(data.size(), start + batch); ++i) idx.push_back(i);
    const Batch b = make_batch(data, idx);
    const InpaintOutput out = model.forward(b.occluded, b.mask);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& s = data[idx[k]];
      r.refined.push_back(fg::tensor_to_image(out.refined, k));
      r.composited.push_back(fg::composite(s.occluded, r.refined.back(), s.mask));
    }
    const double n = std::accumulate(b.mask.data().begin(), b.mask.data().end(), 0.0);
    weighted += masked_l1(out.refined, b.original, b.mask) * n;
    pixels += n;
  }
  r.masked_l1 = pixels > 0 ? weighted / pixels : 0.0;
  return r;
}

inline nlohmann::json trace_to_json(const std::vector<InpaintTraceRow>& trace) {
  auto j = nlohmann::json::array();
  for (const auto& t : trace)
    j.push_back({{"iteration", t.iteration},
                 {"d_loss", t.d_loss},
                 {"g_adversarial", t.g_adversarial},
                 {"l1", t.l1},
                 {"masked_l1", t.masked_l1}});
  return j;
}

inline void save_inpainter(const std::string& path, const Inpainter& model) {
  nc::save_checkpoint(path, nc::state_of(model), nlohmann::json{{"kind", "inpainter"}, {"config", model.config}});
}

inline Inpainter load_inpainter(const std::string& path) {
  const auto ar = nc::load_checkpoint(path);
  if (ar.config.value("kind", "") != "inpainter") throw IoError(path + " is not an inpainter checkpoint");
  InpaintConfig cfg;
  try {
    cfg = ar.config.at("config").get<InpaintConfig>();
  } catch (const nlohmann::json::exception&) {
    throw IoError(path + ": malformed inpainter config");
  }
  Rng rng(0);
  Inpainter model(cfg, rng);
  nc::load_state(nc::state_of(model), ar);
  return model;
}

}  // namespace occage::ip
