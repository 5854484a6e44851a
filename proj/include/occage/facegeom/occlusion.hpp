#pragma once

#include <cmath>
#include <string>

#include "occage/facegeom/image.hpp"

namespace occage::fg {

enum class Region { kEyes, kMouth };

inline std::string to_string(Region r) { return r == Region::kEyes ? "eyes" : "mouth"; }

inline Region parse_region(const std::string& s) {
  if (s == "eyes") return Region::kEyes;
  if (s == "mouth") return Region::kMouth;
  throw ValidationError("unknown occlusion region '" + s + "' (expected eyes|mouth)");
}

struct OcclusionSpec {
  Region region = Region::kEyes;
  double pad_x = 0.0;
  double pad_y = 0.0;

  static OcclusionSpec eyes() { return {Region::kEyes, 25.0, 20.0}; }
  static OcclusionSpec mouth() { return {Region::kMouth, 40.0, 55.0}; }
  static OcclusionSpec mouth_utk() { return {Region::kMouth, 45.0, 60.0}; }

  // Pads are given for 256-pixel faces.
  OcclusionSpec scaled_to(std::size_t face_size) const {
    const double s = static_cast<double>(face_size) / 256.0;
    return {region, pad_x * s, pad_y * s};
  }

  void validate() const {
    if (!(pad_x >= 0.0) || !(pad_y >= 0.0)) throw ValidationError("occlusion pads must be >= 0");
  }
};

// Inclusive pixel rectangle.
struct Rect {
  long x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  long width() const { return x1 - x0 + 1; }
  long height() const { return y1 - y0 + 1; }
  long area() const { return width() * height(); }
  bool operator==(const Rect&) const = default;
};

inline Rect occlusion_rect_unclamped(const LandmarkSet& lm, const OcclusionSpec& spec) {
  spec.validate();
  const bool eyes = spec.region == Region::kEyes;
  const Point2 a = lm[eyes ? kLeftEyeOuter : kMouthLeft];
  const Point2 b = lm[eyes ? kRightEyeOuter : kMouthRight];
  if (!std::isfinite(a.x) || !std::isfinite(a.y) || !std::isfinite(b.x) || !std::isfinite(b.y))
    throw ValidationError("occlusion_rect: anchor landmarks must be finite");
  return {static_cast<long>(std::floor(std::min(a.x, b.x) - spec.pad_x)),
          static_cast<long>(std::floor(std::min(a.y, b.y) - spec.pad_y)),
          static_cast<long>(std::ceil(std::max(a.x, b.x) + spec.pad_x)),
          static_cast<long>(std::ceil(std::max(a.y, b.y) + spec.pad_y))};
}

inline Rect occlusion_rect(const LandmarkSet& lm, const OcclusionSpec& spec, std::size_t height, std::size_t width) {
  Rect r = occlusion_rect_unclamped(lm, spec);
  const long w = static_cast<long>(width), h = static_cast<long>(height);
  if (r.x1 < 0 || r.y1 < 0 || r.x0 > w - 1 || r.y0 > h - 1)
    throw ValidationError("occlusion_rect: rectangle lies entirely outside the image");
  r.x0 = std::max(r.x0, 0L);
  r.y0 = std::max(r.y0, 0L);
  r.x1 = std::min(r.x1, w - 1);
  r.y1 = std::min(r.y1, h - 1);
  return r;
}

struct Occluded {
  Image image;
  Mask mask;
};

inline Occluded apply_occlusion(const Image& img, const Rect& r) {
  if (r.x0 < 0 || r.y0 < 0 || r.x0 > r.x1 || r.y0 > r.y1 || r.x1 >= static_cast<long>(img.width) ||
      r.y1 >= static_cast<long>(img.height))
    throw ValidationError("apply_occlusion: rectangle must lie within the image");
  Occluded out{img, Mask(img.height, img.width)};
  for (auto y = static_cast<std::size_t>(r.y0); y <= static_cast<std::size_t>(r.y1); ++y)
    for (auto x = static_cast<std::size_t>(r.x0); x <= static_cast<std::size_t>(r.x1); ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) out.image.at(y, x, c) = 255;
      out.mask.at(y, x) = 255;
    }
  return out;
}

}  // namespace occage::fg
