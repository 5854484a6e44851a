#pragma once

#include <cmath>
#include <numbers>

#include "occage/facegeom/image.hpp"

namespace occage::fg {

// x' = a·x + b·y + c,  y' = d·x + e·y + f
struct Affine2 {
  double a = 1, b = 0, c = 0;
  double d = 0, e = 1, f = 0;

  Point2 apply(Point2 p) const { return {a * p.x + b * p.y + c, d * p.x + e * p.y + f}; }

  Affine2 inverse() const {
    const double det = a * e - b * d;
    if (std::abs(det) < 1e-15) throw ValidationError("affine transform is singular");
    Affine2 r;
    r.a = e / det;
    r.b = -b / det;
    r.d = -d / det;
    r.e = a / det;
    r.c = -(r.a * c + r.b * f);
    r.f = -(r.d * c + r.e * f);
    return r;
  }

  // (this ∘ o)(p) = this(o(p))
  Affine2 after(const Affine2& o) const {
    return {a * o.a + b * o.d, a * o.b + b * o.e, a * o.c + b * o.f + c,
            d * o.a + e * o.d, d * o.b + e * o.e, d * o.c + e * o.f + f};
  }

  static Affine2 translation(double tx, double ty) { return {1, 0, tx, 0, 1, ty}; }
  static Affine2 scaling(double sx, double sy) { return {sx, 0, 0, 0, sy, 0}; }
  // Counter-clockwise on screen is negative here because y points down.
  static Affine2 rotation_about(Point2 center, double degrees) {
    const double r = degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(r), sn = std::sin(r);
    return {cs, -sn, center.x - cs * center.x + sn * center.y, sn, cs, center.y - sn * center.x - cs * center.y};
  }
};

struct EyeAngle {
  double degrees = 0.0;
  bool degenerate = false;  // eye points coincide
};

inline EyeAngle rotation_angle(Point2 left_eye, Point2 right_eye) {
  if (!std::isfinite(left_eye.x) || !std::isfinite(left_eye.y) || !std::isfinite(right_eye.x) ||
      !std::isfinite(right_eye.y))
    throw ValidationError("rotation_angle: eye coordinates must be finite");
  const double dy = right_eye.y - left_eye.y, dx = right_eye.x - left_eye.x;
  if (dx == 0.0 && dy == 0.0) return {0.0, true};
  return {std::atan2(dy, dx) * 180.0 / std::numbers::pi, false};
}

inline LandmarkSet transform_landmarks(const LandmarkSet& lm, const Affine2& t) {
  LandmarkSet out;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) out[i] = t.apply(lm[i]);
  return out;
}

// Resamples src through src_to_dst with bilinear interpolation. Output pixels
// whose preimage falls outside the source get `fill`.
inline Image warp_affine(const Image& src, const Affine2& src_to_dst, std::size_t out_h, std::size_t out_w,
                         std::uint8_t fill = 0) {
  const Affine2 inv = src_to_dst.inverse();
  Image out(out_h, out_w, src.channels, fill);
  const double max_x = static_cast<double>(src.width) - 0.5, max_y = static_cast<double>(src.height) - 0.5;
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t x = 0; x < out_w; ++x) {
      const Point2 p = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      if (p.x < -0.5 || p.y < -0.5 || p.x > max_x || p.y > max_y) continue;
      for (std::size_t c = 0; c < src.channels; ++c) out.at(y, x, c) = to_u8(sample_bilinear(src, p.x, p.y, c));
    }
  return out;
}

struct AlignedFace {
  Image image;
  LandmarkSet landmarks;
  Affine2 transform;  // source pixel coordinates -> output pixel coordinates
  EyeAngle angle;
};

inline constexpr double kCropMargin = 0.10;

// Levels the eye axis (landmarks 36, 45) by rotating about the eye midpoint,
// crops the landmark box plus a margin, and resizes to out_size².
inline AlignedFace align_and_crop(const Image& img, const LandmarkSet& lm, std::size_t out_size) {
  if (out_size < 16) throw ValidationError("align_and_crop: out_size must be >= 16");
  if (!img.valid() || img.height == 0 || img.width == 0) throw ValidationError("align_and_crop: invalid image");
  if (!lm.finite()) throw ValidationError("align_and_crop: landmarks must be finite");

  const Point2 le = lm[kLeftEyeOuter], re = lm[kRightEyeOuter];
  const EyeAngle angle = rotation_angle(le, re);
  const Point2 mid{(le.x + re.x) / 2, (le.y + re.y) / 2};
  const Affine2 rot = angle.degrees == 0.0 ? Affine2{} : Affine2::rotation_about(mid, -angle.degrees);

  const LandmarkSet rotated = transform_landmarks(lm, rot);
  double x0 = rotated[0].x, x1 = x0, y0 = rotated[0].y, y1 = y0;
  for (const auto& p : rotated.points) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  const double mx = (x1 - x0) * kCropMargin, my = (y1 - y0) * kCropMargin;
  x0 = std::max(x0 - mx, 0.0);
  y0 = std::max(y0 - my, 0.0);
  x1 = std::min(x1 + mx, static_cast<double>(img.width - 1));
  y1 = std::min(y1 + my, static_cast<double>(img.height - 1));
  if (!(x1 - x0 >= 1.0) || !(y1 - y0 >= 1.0))
    throw ValidationError("align_and_crop: degenerate crop box");

  // Box edges land on the outer edges of the first and last output pixels.
  const auto n = static_cast<double>(out_size);
  const Affine2 crop = Affine2::translation(-0.5, -0.5)
                           .after(Affine2::scaling(n / (x1 - x0), n / (y1 - y0)))
                           .after(Affine2::translation(-x0, -y0));
  AlignedFace out;
  out.transform = crop.after(rot);
  out.image = warp_affine(img, out.transform, out_size, out_size);
  out.landmarks = transform_landmarks(lm, out.transform);
  out.angle = angle;
  return out;
}

}  // namespace occage::fg
