#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "occage/core/error.hpp"

namespace occage::fg {

// 8-bit raster, row-major, channels interleaved.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c), data(h * w * c, fill) {
    if (c != 1 && c != 3) throw ValidationError("image: channels must be 1 or 3");
  }

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c = 0) { return data[(y * width + x) * channels + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return data[(y * width + x) * channels + c];
  }
  bool valid() const { return data.size() == height * width * channels && (channels == 1 || channels == 3); }
  bool operator==(const Image&) const = default;
};

// Binary occlusion mask: 255 = occluded, 0 = visible.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), data(h * w, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
  bool is_binary() const {
    return std::all_of(data.begin(), data.end(), [](std::uint8_t v) { return v == 0 || v == 255; });
  }
  std::size_t occluded_count() const {
    return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{255}));
  }
  bool operator==(const Mask&) const = default;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

inline constexpr std::size_t kLandmarkCount = 68;
inline constexpr std::size_t kLeftEyeOuter = 36;
inline constexpr std::size_t kRightEyeOuter = 45;
inline constexpr std::size_t kMouthLeft = 48;
inline constexpr std::size_t kMouthRight = 54;

// dlib 68-point layout: jaw 0-16, brows 17-26, nose 27-35, eyes 36-47,
// mouth 48-67.
struct LandmarkSet {
  std::array<Point2, kLandmarkCount> points{};

  Point2& operator[](std::size_t i) { return points[i]; }
  const Point2& operator[](std::size_t i) const { return points[i]; }
  bool finite() const {
    return std::all_of(points.begin(), points.end(),
                       [](const Point2& p) { return std::isfinite(p.x) && std::isfinite(p.y); });
  }
  bool operator==(const LandmarkSet&) const = default;
};

// Bilinear sample, coordinates clamped to the border. Pixel centers sit on integers.
inline double sample_bilinear(const Image& img, double x, double y, std::size_t c) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(x)), y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  return (img.at(y0, x0, c) * (1 - fx) + img.at(y0, x1, c) * fx) * (1 - fy) +
         (img.at(y1, x0, c) * (1 - fx) + img.at(y1, x1, c) * fx) * fy;
}

inline std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

// Half-pixel bilinear resize. A 2x downscale averages 2x2 blocks exactly.
inline Image resize(const Image& img, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ValidationError("resize: zero-size output");
  Image out(out_h, out_w, img.channels);
  const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t x = 0; x < out_w; ++x)
      for (std::size_t c = 0; c < img.channels; ++c)
        out.at(y, x, c) = to_u8(sample_bilinear(img, (static_cast<double>(x) + 0.5) * sx - 0.5,
                                                (static_cast<double>(y) + 0.5) * sy - 0.5, c));
  return out;
}

// Landmarks follow the same half-pixel mapping as resize().
inline LandmarkSet resize_landmarks(const LandmarkSet& lm, std::size_t in_h, std::size_t in_w, std::size_t out_h,
                                    std::size_t out_w) {
  LandmarkSet r;
  const double sy = static_cast<double>(out_h) / static_cast<double>(in_h);
  const double sx = static_cast<double>(out_w) / static_cast<double>(in_w);
  for (std::size_t i = 0; i < kLandmarkCount; ++i)
    r[i] = {(lm[i].x + 0.5) * sx - 0.5, (lm[i].y + 0.5) * sy - 0.5};
  return r;
}

// Any occluded source pixel under an output pixel marks it occluded.
inline Mask resize_mask(const Mask& m, std::size_t out_h, std::size_t out_w) {
  Mask out(out_h, out_w);
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t x = 0; x < out_w; ++x) {
      const std::size_t y0 = y * m.height / out_h, y1 = std::max(y0 + 1, (y + 1) * m.height / out_h);
      const std::size_t x0 = x * m.width / out_w, x1 = std::max(x0 + 1, (x + 1) * m.width / out_w);
      std::uint8_t v = 0;
      for (std::size_t yy = y0; yy < y1 && yy < m.height; ++yy)
        for (std::size_t xx = x0; xx < x1 && xx < m.width; ++xx) v = std::max(v, m.at(yy, xx));
      out.at(y, x) = v;
    }
  return out;
}

// ITU-R BT.601 luma.
inline std::vector<double> luma(const Image& img) {
  std::vector<double> out(img.height * img.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (img.channels == 1) {
      out[i] = img.data[i];
    } else {
      out[i] = 0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] + 0.114 * img.data[3 * i + 2];
    }
  }
  return out;
}

inline Image to_rgb(const Image& img) {
  if (img.channels == 3) return img;
  Image out(img.height, img.width, 3);
  for (std::size_t i = 0; i < img.height * img.width; ++i)
    for (std::size_t c = 0; c < 3; ++c) out.data[3 * i + c] = img.data[i];
  return out;
}

}  // namespace occage::fg
