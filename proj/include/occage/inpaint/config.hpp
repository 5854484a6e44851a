#pragma once

#include <nlohmann/json.hpp>

#include <string>

#include "occage/core/error.hpp"

namespace occage::ip {

struct InpaintConfig {
  std::size_t image_size = 32;
  std::size_t width = 16;  // base channel width; layers use 1x, 2x, 4x
  std::size_t patch_size = 3;
  std::size_t patch_stride = 1;
  double temperature = 10.0;
  double leaky_slope = 0.2;
  // Power iteration per discriminator forward: at least one sweep, then until
  // sigma settles to sn_tolerance (relative) or sn_max_iters sweeps.
  double sn_tolerance = 1e-6;
  int sn_max_iters = 100;

  std::size_t batch_size = 8;
  std::size_t iterations = 2000;
  double lr_generator = 1e-4;
  double lr_discriminator = 1e-4;
  double l1_weight = 1.0;
  double adversarial_weight = 1.0;
  std::size_t sigma_check_every = 50;

  // Generator and discriminator each halve the side twice / three times.
  static constexpr std::size_t kGeneratorDownsample = 4;
  static constexpr std::size_t kDiscriminatorDownsample = 8;

  void validate() const {
    if (image_size == 0 || image_size % kDiscriminatorDownsample != 0)
      throw ValidationError("inpaint: image_size must be a positive multiple of 8");
    if (width < 2 || width % 2 != 0) throw ValidationError("inpaint: width must be an even number >= 2");
    if (patch_size % 2 == 0) throw ValidationError("inpaint: patch_size must be odd");
    if (patch_stride != 1) throw ValidationError("inpaint: only patch_stride 1 is supported");
    if (!(temperature > 0)) throw ValidationError("inpaint: temperature must be positive");
    if (batch_size == 0) throw ValidationError("inpaint: batch_size must be positive");
    if (!(lr_generator > 0) || !(lr_discriminator > 0)) throw ValidationError("inpaint: learning rates must be positive");
    if (sn_tolerance < 0 || sn_max_iters < 1) throw ValidationError("inpaint: bad spectral-norm iteration settings");
    if (l1_weight < 0 || adversarial_weight < 0) throw ValidationError("inpaint: loss weights must be >= 0");
  }

  static InpaintConfig paper() {
    InpaintConfig c;
    c.image_size = 256;
    c.width = 32;
    c.batch_size = 16;
    c.iterations = 1000000;
    return c;
  }

  static InpaintConfig toy() {
    InpaintConfig c;
    c.image_size = 32;
    c.width = 16;
    c.batch_size = 8;
    c.iterations = 500;
    c.lr_generator = 1e-3;
    c.lr_discriminator = 1e-3;
    return c;
  }
};

inline void to_json(nlohmann::json& j, const InpaintConfig& c) {
  j = nlohmann::json{{"image_size", c.image_size},
                     {"width", c.width},
                     {"patch_size", c.patch_size},
                     {"patch_stride", c.patch_stride},
                     {"temperature", c.temperature},
                     {"leaky_slope", c.leaky_slope},
                     {"sn_tolerance", c.sn_tolerance},
                     {"sn_max_iters", c.sn_max_iters},
                     {"batch_size", c.batch_size},
                     {"iterations", c.iterations},
                     {"lr_generator", c.lr_generator},
                     {"lr_discriminator", c.lr_discriminator},
                     {"l1_weight", c.l1_weight},
                     {"adversarial_weight", c.adversarial_weight},
                     {"sigma_check_every", c.sigma_check_every}};
}

// Missing keys keep the values already in `c`; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, InpaintConfig& c) {
  if (!j.is_object()) throw ValidationError("inpaint config must be a JSON object");
  const nlohmann::json known = c;
  for (const auto& item : j.items())
    if (!known.contains(item.key())) throw ValidationError("inpaint config: unknown key '" + item.key() + "'");
  auto get = [&](const char* k, auto& field) {
    if (!j.contains(k)) return;
    try {
      j.at(k).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ValidationError(std::string("inpaint config: bad value for '") + k + "'");
    }
  };
  get("image_size", c.image_size);
  get("width", c.width);
  get("patch_size", c.patch_size);
  get("patch_stride", c.patch_stride);
  get("temperature", c.temperature);
  get("leaky_slope", c.leaky_slope);
  get("sn_tolerance", c.sn_tolerance);
  get("sn_max_iters", c.sn_max_iters);
  get("batch_size", c.batch_size);
  get("iterations", c.iterations);
  get("lr_generator", c.lr_generator);
  get("lr_discriminator", c.lr_discriminator);
  get("l1_weight", c.l1_weight);
  get("adversarial_weight", c.adversarial_weight);
  get("sigma_check_every", c.sigma_check_every);
}

}  // namespace occage::ip
