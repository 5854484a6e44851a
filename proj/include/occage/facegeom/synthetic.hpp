#pragma once

// Procedural test faces with exact 68-point landmarks and a known age.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>

#include "occage/core/rng.hpp"
#include "occage/facegeom/image.hpp"

namespace occage::fg {

inline constexpr double kSynthMaxAge = 69.0;
inline constexpr std::size_t kMaxWrinkles = 12;

inline std::size_t wrinkle_count(double age) {
  age = std::clamp(age, 0.0, kSynthMaxAge);
  return std::min<std::size_t>(kMaxWrinkles, 1 + static_cast<std::size_t>(std::floor(age / 6.0)));
}

struct SyntheticFace {
  Image image;
  LandmarkSet landmarks;
  double age = 0.0;
  std::size_t wrinkles = 0;
};

namespace detail {

struct Rgb {
  double r, g, b;
};

inline void blend_pixel(Image& img, long x, long y, Rgb c, double alpha = 1.0) {
  if (x < 0 || y < 0 || x >= static_cast<long>(img.width) || y >= static_cast<long>(img.height)) return;
  const double v[3] = {c.r, c.g, c.b};
  for (std::size_t ch = 0; ch < 3; ++ch) {
    auto& p = img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), ch);
    p = to_u8(p * (1 - alpha) + v[ch] * alpha);
  }
}

inline void fill_ellipse(Image& img, Point2 c, double rx, double ry, Rgb color) {
  for (long y = static_cast<long>(std::floor(c.y - ry)); y <= static_cast<long>(std::ceil(c.y + ry)); ++y)
    for (long x = static_cast<long>(std::floor(c.x - rx)); x <= static_cast<long>(std::ceil(c.x + rx)); ++x) {
      const double u = (x - c.x) / rx, v = (y - c.y) / ry;
      if (u * u + v * v <= 1.0) blend_pixel(img, x, y, color);
    }
}

// Pixels within half_width of the segment a-b.
inline void draw_segment(Image& img, Point2 a, Point2 b, double half_width, Rgb color, double alpha = 1.0) {
  const double lx = std::min(a.x, b.x) - half_width - 1, hx = std::max(a.x, b.x) + half_width + 1;
  const double ly = std::min(a.y, b.y) - half_width - 1, hy = std::max(a.y, b.y) + half_width + 1;
  const double dx = b.x - a.x, dy = b.y - a.y, len2 = dx * dx + dy * dy;
  for (long y = static_cast<long>(std::floor(ly)); y <= static_cast<long>(std::ceil(hy)); ++y)
    for (long x = static_cast<long>(std::floor(lx)); x <= static_cast<long>(std::ceil(hx)); ++x) {
      double t = len2 > 0 ? ((x - a.x) * dx + (y - a.y) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double px = a.x + t * dx - x, py = a.y + t * dy - y;
      if (px * px + py * py <= half_width * half_width) blend_pixel(img, x, y, color, alpha);
    }
}

inline void draw_polyline(Image& img, const LandmarkSet& lm, std::size_t first, std::size_t last, double hw, Rgb c,
                          bool closed = false) {
  for (std::size_t i = first; i < last; ++i) draw_segment(img, lm[i], lm[i + 1], hw, c);
  if (closed) draw_segment(img, lm[last], lm[first], hw, c);
}

}  // namespace detail

// Age is drawn uniformly from [0, 69] unless given. Wrinkle lines grow in
// number and contrast with age; hair greys with age.
inline SyntheticFace synthetic_face(std::uint64_t seed, std::size_t size, std::optional<double> age = std::nullopt) {
  using detail::Rgb;
  if (size < 64) throw ValidationError("synthetic_face: size must be >= 64");
  Rng rng(seed);
  const double S = static_cast<double>(size);
  SyntheticFace out;
  out.age = age ? std::clamp(*age, 0.0, kSynthMaxAge) : rng.uniform(0.0, kSynthMaxAge);
  out.wrinkles = wrinkle_count(out.age);
  const double t = out.age / kSynthMaxAge;

  const Rgb bg{rng.uniform(40, 110), rng.uniform(60, 130), rng.uniform(90, 160)};
  Image img(size, size, 3);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) detail::blend_pixel(img, static_cast<long>(x), static_cast<long>(y), bg);

  const Point2 c{S * (0.5 + rng.uniform(-0.03, 0.03)), S * (0.53 + rng.uniform(-0.02, 0.02))};
  const double rx = S * rng.uniform(0.30, 0.34), ry = S * rng.uniform(0.38, 0.42);
  const double tone = rng.uniform(-25, 25);
  const Rgb skin{205 + tone, 165 + tone, 135 + tone};

  const double grey = 40 + 180 * t;
  const Rgb hair{grey + rng.uniform(-10, 10), grey * 0.95, grey * 0.9};
  detail::fill_ellipse(img, {c.x, c.y - ry * 0.25}, rx * 1.08, ry * 0.95, hair);
  detail::fill_ellipse(img, c, rx, ry, skin);

  LandmarkSet& lm = out.landmarks;
  for (std::size_t i = 0; i <= 16; ++i) {
    const double a = std::numbers::pi * (1.0 - static_cast<double>(i) / 16.0);
    lm[i] = {c.x + rx * 0.98 * std::cos(a), c.y + ry * 0.98 * std::sin(a)};
  }

  const double eye_y = c.y - ry * 0.18 + rng.uniform(-0.01, 0.01) * S;
  const double eye_dx = rx * rng.uniform(0.40, 0.46), er = S * 0.05;
  const Point2 el{c.x - eye_dx, eye_y}, erc{c.x + eye_dx, eye_y};
  const double k = 0.8 * er;
  // Left eye: 36 outer, 39 inner. Right eye: 42 inner, 45 outer.
  lm[36] = {el.x - k, el.y};
  lm[37] = {el.x - k / 2, el.y - k / 2};
  lm[38] = {el.x + k / 2, el.y - k / 2};
  lm[39] = {el.x + k, el.y};
  lm[40] = {el.x + k / 2, el.y + k / 2};
  lm[41] = {el.x - k / 2, el.y + k / 2};
  lm[42] = {erc.x - k, erc.y};
  lm[43] = {erc.x - k / 2, erc.y - k / 2};
  lm[44] = {erc.x + k / 2, erc.y - k / 2};
  lm[45] = {erc.x + k, erc.y};
  lm[46] = {erc.x + k / 2, erc.y + k / 2};
  lm[47] = {erc.x - k / 2, erc.y + k / 2};

  const double brow_y = eye_y - er * 1.9;
  for (std::size_t i = 0; i < 5; ++i) {
    const double u = static_cast<double>(i) / 4.0;
    const double lift = std::sin(u * std::numbers::pi) * er * 0.5;
    lm[17 + i] = {el.x - er * 1.3 + u * er * 2.4, brow_y - lift};
    lm[22 + i] = {erc.x - er * 1.1 + u * er * 2.4, brow_y - lift};
  }

  const double nose_top = eye_y, nose_tip = c.y + ry * 0.15;
  for (std::size_t i = 0; i < 4; ++i) lm[27 + i] = {c.x, nose_top + (nose_tip - nose_top) * static_cast<double>(i) / 3.0};
  for (std::size_t i = 0; i < 5; ++i) lm[31 + i] = {c.x + (static_cast<double>(i) - 2.0) * S * 0.025, nose_tip + S * 0.02};

  const double mouth_y = c.y + ry * 0.45 + rng.uniform(-0.01, 0.01) * S;
  const double mw = rx * rng.uniform(0.38, 0.46), mh = S * 0.03;
  // Outer lip 48-59 clockwise from the left corner, inner lip 60-67.
  for (std::size_t i = 0; i < 12; ++i) {
    const double a = std::numbers::pi * (1.0 + static_cast<double>(i) / 6.0);
    lm[48 + i] = {c.x + mw * std::cos(a), mouth_y + mh * std::sin(a)};
  }
  for (std::size_t i = 0; i < 8; ++i) {
    const double a = std::numbers::pi * (1.0 + static_cast<double>(i) / 4.0);
    lm[60 + i] = {c.x + mw * 0.7 * std::cos(a), mouth_y + mh * 0.4 * std::sin(a)};
  }
  lm[48].y = lm[54].y = mouth_y;
  lm[48].x = c.x - mw;
  lm[54].x = c.x + mw;

  const Rgb white{240, 240, 235};
  const Rgb iris{rng.uniform(30, 90), rng.uniform(40, 100), rng.uniform(30, 80)};
  for (const Point2 e : {el, erc}) {
    detail::fill_ellipse(img, e, er, er, white);
    detail::fill_ellipse(img, e, er * 0.5, er * 0.5, iris);
  }
  const double line = std::max(0.6, S / 100.0);
  detail::draw_polyline(img, lm, 17, 21, line, hair);
  detail::draw_polyline(img, lm, 22, 26, line, hair);
  detail::draw_polyline(img, lm, 27, 30, line * 0.7, {skin.r - 50, skin.g - 50, skin.b - 45});
  detail::draw_polyline(img, lm, 31, 35, line * 0.7, {skin.r - 50, skin.g - 50, skin.b - 45});
  detail::draw_polyline(img, lm, 48, 59, line, {150, 50, 55}, true);

  // Wrinkle slots in fill order: forehead, crow's feet, under-eye, nasolabial.
  struct Slot {
    Point2 a, b;
  };
  const double fh = brow_y - er * 0.9;
  const Slot slots[kMaxWrinkles] = {
      {{c.x - rx * 0.45, fh}, {c.x + rx * 0.45, fh}},
      {{c.x - rx * 0.40, fh - S * 0.035}, {c.x + rx * 0.40, fh - S * 0.035}},
      {{el.x - er * 1.5, eye_y - er * 0.3}, {el.x - er * 2.3, eye_y - er * 0.8}},
      {{erc.x + er * 1.5, eye_y - er * 0.3}, {erc.x + er * 2.3, eye_y - er * 0.8}},
      {{c.x - rx * 0.35, fh - S * 0.07}, {c.x + rx * 0.35, fh - S * 0.07}},
      {{el.x - er * 1.5, eye_y + er * 0.3}, {el.x - er * 2.3, eye_y + er * 0.8}},
      {{erc.x + er * 1.5, eye_y + er * 0.3}, {erc.x + er * 2.3, eye_y + er * 0.8}},
      {{c.x - mw * 0.9, nose_tip}, {c.x - mw * 1.3, mouth_y + mh}},
      {{c.x + mw * 0.9, nose_tip}, {c.x + mw * 1.3, mouth_y + mh}},
      {{el.x - er, eye_y + er * 1.4}, {el.x + er, eye_y + er * 1.4}},
      {{erc.x - er, eye_y + er * 1.4}, {erc.x + er, eye_y + er * 1.4}},
      {{c.x - rx * 0.25, fh + S * 0.02}, {c.x + rx * 0.25, fh + S * 0.02}},
  };
  const double depth = 0.35 + 0.55 * t;
  const Rgb crease{skin.r * 0.35, skin.g * 0.3, skin.b * 0.3};
  for (std::size_t i = 0; i < out.wrinkles; ++i)
    detail::draw_segment(img, slots[i].a, slots[i].b, line, crease, depth);

  out.image = std::move(img);
  return out;
}

}  // namespace occage::fg
