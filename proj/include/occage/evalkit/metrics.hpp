#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "occage/facegeom/image.hpp"

namespace occage::ev {

inline constexpr double kPeak = 255.0;

inline void check_same_shape(const fg::Image& a, const fg::Image& b, const char* what) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw ShapeError(std::string(what) + ": image shapes differ (" + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + "x" + std::to_string(a.channels) + " vs " + std::to_string(b.height) +
                     "x" + std::to_string(b.width) + "x" + std::to_string(b.channels) + ")");
}

inline double mse(const fg::Image& a, const fg::Image& b) {
  check_same_shape(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

// dB over all channels jointly; +inf for identical images.
inline double psnr(const fg::Image& a, const fg::Image& b) {
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(kPeak * kPeak / m);
}

// ITU-R 601 luma, unrounded.
inline std::vector<double> luma_plane(const fg::Image& img) {
  const std::size_t n = img.height * img.width;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (img.channels == 1) {
      out[i] = img.data[i];
    } else {
      const auto* p = img.data.data() + i * img.channels;
      out[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
  }
  return out;
}

struct SsimOptions {
  bool windowed = true;  // false: one window spanning the whole image
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01, k2 = 0.03;
};

inline double ssim_term(double mx, double my, double vx, double vy, double cxy, double c1, double c2) {
  return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

namespace detail {

// Valid-mode separable filtering of an h x w plane with a 1-D kernel.
inline std::vector<double> filter_valid(const std::vector<double>& p, std::size_t h, std::size_t w,
                                        const std::vector<double>& k) {
  const std::size_t n = k.size(), ow = w - n + 1, oh = h - n + 1;
  std::vector<double> rows(h * ow, 0.0), out(oh * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * p[y * w + x + i];
      rows[y * ow + x] = s;
    }
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

}  // namespace detail

inline std::vector<double> gaussian_kernel(std::size_t n, double sigma) {
  std::vector<double> k(n);
  const double c = (static_cast<double>(n) - 1.0) / 2.0;
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += (k[i] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma)));
  for (auto& v : k) v /= z;
  return k;
}

// Covariance-form SSIM on luma, averaged over every fully inside window.
inline double ssim(const fg::Image& a, const fg::Image& b, const SsimOptions& o = {}) {
  check_same_shape(a, b, "ssim");
  const double c1 = (o.k1 * kPeak) * (o.k1 * kPeak), c2 = (o.k2 * kPeak) * (o.k2 * kPeak);
  const auto x = luma_plane(a), y = luma_plane(b);
  const std::size_t h = a.height, w = a.width;
  if (!o.windowed) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
    mx /= n, my /= n;
    double vx = 0, vy = 0, cxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      vx += (x[i] - mx) * (x[i] - mx);
      vy += (y[i] - my) * (y[i] - my);
      cxy += (x[i] - mx) * (y[i] - my);
    }
    return ssim_term(mx, my, vx / n, vy / n, cxy / n, c1, c2);
  }
  if (h < o.window || w < o.window)
    throw ShapeError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) + " smaller than the " +
                     std::to_string(o.window) + "x" + std::to_string(o.window) + " window");
  const auto k = gaussian_kernel(o.window, o.sigma);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xx[i] = x[i] * x[i], yy[i] = y[i] * y[i], xy[i] = x[i] * y[i];
  const auto mx = detail::filter_valid(x, h, w, k), my = detail::filter_valid(y, h, w, k);
  const auto sxx = detail::filter_valid(xx, h, w, k), syy = detail::filter_valid(yy, h, w, k),
             sxy = detail::filter_valid(xy, h, w, k);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i)
    total += ssim_term(mx[i], my[i], sxx[i] - mx[i] * mx[i], syy[i] - my[i] * my[i], sxy[i] - mx[i] * my[i], c1, c2);
  return total / static_cast<double>(mx.size());
}

inline double mae(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw ShapeError("mae: prediction/truth length mismatch");
  if (pred.empty()) throw ValidationError("mae: no samples");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

}  // namespace occage::ev
