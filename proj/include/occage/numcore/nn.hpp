#pragma once

// Neural-network layer ops: softmax family, normalization, convolution,
// resampling, pooling, dropout and the Huber loss.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "occage/core/rng.hpp"
#include "occage/numcore/ops.hpp"

namespace occage::nc {

inline constexpr double kNormEps = 1e-5;

namespace detail {

struct AxisSplit {
  std::size_t outer, len, inner;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(s));
  AxisSplit r{1, s[axis], 1};
  for (std::size_t d = 0; d < axis; ++d) r.outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) r.inner *= s[d];
  return r;
}

}  // namespace detail

// ---- softmax family --------------------------------------------------------

inline Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto sp = detail::split_axis(x.shape(), axis);
  std::vector<double> out(x.numel());
  const auto& xv = x.values();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.len * sp.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < sp.len; ++a) mx = std::max(mx, xv[base + a * sp.inner]);
      double z = 0.0;
      for (std::size_t a = 0; a < sp.len; ++a) {
        const double e = std::exp(xv[base + a * sp.inner] - mx);
        out[base + a * sp.inner] = e;
        z += e;
      }
      for (std::size_t a = 0; a < sp.len; ++a) out[base + a * sp.inner] /= z;
    }
  auto* xn = x.node();
  return Tensor::make_result(x.shape(), std::move(out), {x}, [xn, sp](detail::Node& self) {
    auto g = xn->grad_buffer();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.len * sp.inner + i;
        double dot = 0.0;
        for (std::size_t a = 0; a < sp.len; ++a) dot += self.grad[base + a * sp.inner] * self.value[base + a * sp.inner];
        for (std::size_t a = 0; a < sp.len; ++a) {
          const std::size_t j = base + a * sp.inner;
          g[j] += self.value[j] * (self.grad[j] - dot);
        }
      }
  });
}

inline Tensor log_softmax(const Tensor& x, std::size_t axis) {
  const auto sp = detail::split_axis(x.shape(), axis);
  std::vector<double> out(x.numel());
  const auto& xv = x.values();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.len * sp.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < sp.len; ++a) mx = std::max(mx, xv[base + a * sp.inner]);
      double z = 0.0;
      for (std::size_t a = 0; a < sp.len; ++a) z += std::exp(xv[base + a * sp.inner] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t a = 0; a < sp.len; ++a) out[base + a * sp.inner] = xv[base + a * sp.inner] - lse;
    }
  auto* xn = x.node();
  return Tensor::make_result(x.shape(), std::move(out), {x}, [xn, sp](detail::Node& self) {
    auto g = xn->grad_buffer();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.len * sp.inner + i;
        double gs = 0.0;
        for (std::size_t a = 0; a < sp.len; ++a) gs += self.grad[base + a * sp.inner];
        for (std::size_t a = 0; a < sp.len; ++a) {
          const std::size_t j = base + a * sp.inner;
          g[j] += self.grad[j] - std::exp(self.value[j]) * gs;
        }
      }
  });
}

// ---- normalization ---------------------------------------------------------

// Normalizes over the last dimension.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = kNormEps) {
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d)
    throw ShapeError("layer_norm: affine size " + std::to_string(gamma.numel()) + " does not match feature size " +
                     std::to_string(d));
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel()), xhat(x.numel()), rstd(rows);
  const auto& xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* p = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += p[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (p[j] - mu) * (p[j] - mu);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (p[j] - mu) * rstd[r];
      out[r * d + j] = gamma.data()[j] * xhat[r * d + j] + beta.data()[j];
    }
  }
  auto *xn = x.node(), *gn = gamma.node(), *bn = beta.node();
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [xn, gn, bn, d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](detail::Node& self) {
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* g = self.grad.data() + r * d;
          const double* xh = xhat.data() + r * d;
          if (gn->requires_grad) {
            auto gg = gn->grad_buffer();
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[j] * xh[j];
          }
          if (bn->requires_grad) {
            auto gb = bn->grad_buffer();
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[j];
          }
          if (xn->requires_grad) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = g[j] * gn->value[j];
              m1 += dxh;
              m2 += dxh * xh[j];
            }
            m1 *= inv_d;
            m2 *= inv_d;
            auto gx = xn->grad_buffer();
            for (std::size_t j = 0; j < d; ++j)
              gx[r * d + j] += rstd[r] * (g[j] * gn->value[j] - m1 - xh[j] * m2);
          }
        }
      });
}

// Per-channel normalization of x [B, C, ...]. In training mode batch
// statistics are used and the running buffers are updated in place
// (unbiased variance, exponential momentum).
inline Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Tensor& running_mean,
                         const Tensor& running_var, bool training, double momentum = 0.1, double eps = kNormEps) {
  if (x.dim() < 2) throw ShapeError("batch_norm: input must be [B, C, ...]");
  const std::size_t B = x.size(0), C = x.size(1);
  if (gamma.numel() != C || beta.numel() != C || running_mean.numel() != C || running_var.numel() != C)
    throw ShapeError("batch_norm: parameter size does not match channel count " + std::to_string(C));
  const std::size_t inner = x.numel() / (B * C);
  const std::size_t count = B * inner;
  std::vector<double> out(x.numel()), xhat(x.numel()), rstd(C);
  const auto& xv = x.values();
  auto rm = running_mean.mutable_data();
  auto rv = running_var.mutable_data();
  for (std::size_t c = 0; c < C; ++c) {
    double mu, var;
    if (training) {
      mu = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < inner; ++i) mu += xv[(b * C + c) * inner + i];
      mu /= static_cast<double>(count);
      var = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < inner; ++i) {
          const double dv = xv[(b * C + c) * inner + i] - mu;
          var += dv * dv;
        }
      const double unbiased = count > 1 ? var / static_cast<double>(count - 1) : 0.0;
      var /= static_cast<double>(count);
      rm[c] = (1.0 - momentum) * rm[c] + momentum * mu;
      rv[c] = (1.0 - momentum) * rv[c] + momentum * unbiased;
    } else {
      mu = rm[c];
      var = rv[c];
    }
    rstd[c] = 1.0 / std::sqrt(var + eps);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t j = (b * C + c) * inner + i;
        xhat[j] = (xv[j] - mu) * rstd[c];
        out[j] = gamma.data()[c] * xhat[j] + beta.data()[c];
      }
  }
  auto *xn = x.node(), *gn = gamma.node(), *bn = beta.node();
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [xn, gn, bn, B, C, inner, count, training, xhat = std::move(xhat), rstd = std::move(rstd)](detail::Node& self) {
        for (std::size_t c = 0; c < C; ++c) {
          double sg = 0.0, sgx = 0.0;
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t j = (b * C + c) * inner + i;
              sg += self.grad[j];
              sgx += self.grad[j] * xhat[j];
            }
          if (gn->requires_grad) gn->grad_buffer()[c] += sgx;
          if (bn->requires_grad) bn->grad_buffer()[c] += sg;
          if (!xn->requires_grad) continue;
          auto gx = xn->grad_buffer();
          const double gam = gn->value[c];
          const double inv_n = 1.0 / static_cast<double>(count);
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t j = (b * C + c) * inner + i;
              if (training)
                gx[j] += gam * rstd[c] * (self.grad[j] - sg * inv_n - xhat[j] * sgx * inv_n);
              else
                gx[j] += gam * rstd[c] * self.grad[j];
            }
        }
      });
}

// Rows of x [..., d] scaled to unit L2 norm; eps keeps zero rows finite.
inline Tensor normalize_rows(const Tensor& x, double eps = 1e-12) {
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel()), inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += x.data()[r * d + j] * x.data()[r * d + j];
    inv[r] = 1.0 / std::sqrt(s + eps);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x.data()[r * d + j] * inv[r];
  }
  auto* xn = x.node();
  return Tensor::make_result(x.shape(), std::move(out), {x}, [xn, d, rows, inv = std::move(inv)](detail::Node& self) {
    auto g = xn->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += self.grad[r * d + j] * self.value[r * d + j];
      for (std::size_t j = 0; j < d; ++j)
        g[r * d + j] += inv[r] * (self.grad[r * d + j] - self.value[r * d + j] * dot);
    }
  });
}

// ---- convolution -----------------------------------------------------------

struct Conv2dGeometry {
  std::size_t batch, in_ch, height, width, out_ch, kh, kw, stride, padding, out_h, out_w;
};

inline Conv2dGeometry conv2d_geometry(const Shape& input, const Shape& weight, std::size_t stride,
                                      std::size_t padding) {
  if (input.size() != 4) throw ShapeError("conv2d: input must be [B,C,H,W], got " + to_string(input));
  if (weight.size() != 4) throw ShapeError("conv2d: weight must be [Cout,Cin,kh,kw], got " + to_string(weight));
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (input[1] != weight[1])
    throw ShapeError("conv2d: input has " + std::to_string(input[1]) + " channels but weight expects " +
                     std::to_string(weight[1]));
  const std::size_t ph = input[2] + 2 * padding, pw = input[3] + 2 * padding;
  if (weight[2] > ph || weight[3] > pw)
    throw ShapeError("conv2d: kernel " + to_string(weight) + " larger than padded input " + to_string(input));
  return {input[0], input[1], input[2], input[3], weight[0], weight[2], weight[3], stride, padding,
          (ph - weight[2]) / stride + 1, (pw - weight[3]) / stride + 1};
}

namespace detail {

// Output columns [lo, hi) whose input column ox*stride + k - padding lies
// inside [0, width).
inline std::pair<std::size_t, std::size_t> valid_span(const Conv2dGeometry& g, std::size_t k) {
  const auto s = static_cast<std::ptrdiff_t>(g.stride), off = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(g.padding);
  const auto W = static_cast<std::ptrdiff_t>(g.width), n = static_cast<std::ptrdiff_t>(g.out_w);
  std::ptrdiff_t lo = off >= 0 ? 0 : (-off + s - 1) / s;
  std::ptrdiff_t hi = W - off <= 0 ? 0 : (W - off - 1) / s + 1;
  lo = std::min(lo, n);
  hi = std::clamp(hi, lo, n);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// col is [Cin*kh*kw, B*Ho*Wo]; column b*L + l.
inline void im2col(const Conv2dGeometry& g, const double* x, double* col) {
  const std::size_t L = g.out_h * g.out_w, cols = g.batch * L;
  for (std::size_t c = 0; c < g.in_ch; ++c)
    for (std::size_t ki = 0; ki < g.kh; ++ki)
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = col + ((c * g.kh + ki) * g.kw + kj) * cols;
        const auto [lo, hi] = valid_span(g, kj);
        const auto off = static_cast<std::ptrdiff_t>(kj) - static_cast<std::ptrdiff_t>(g.padding);
        for (std::size_t b = 0; b < g.batch; ++b) {
          const double* plane = x + (b * g.in_ch + c) * g.height * g.width;
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.padding);
            double* dst = row + b * L + oy * g.out_w;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
              std::fill_n(dst, g.out_w, 0.0);
              continue;
            }
            const double* src = plane + static_cast<std::size_t>(iy) * g.width;
            std::fill(dst, dst + lo, 0.0);
            std::fill(dst + hi, dst + g.out_w, 0.0);
            if (g.stride == 1) {
              std::copy_n(src + static_cast<std::ptrdiff_t>(lo) + off, hi - lo, dst + lo);
            } else {
              for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[static_cast<std::ptrdiff_t>(ox * g.stride) + off];
            }
          }
        }
      }
}

inline void col2im_add(const Conv2dGeometry& g, const double* col, double* dx) {
  const std::size_t L = g.out_h * g.out_w, cols = g.batch * L;
  for (std::size_t c = 0; c < g.in_ch; ++c)
    for (std::size_t ki = 0; ki < g.kh; ++ki)
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = col + ((c * g.kh + ki) * g.kw + kj) * cols;
        const auto [lo, hi] = valid_span(g, kj);
        const auto off = static_cast<std::ptrdiff_t>(kj) - static_cast<std::ptrdiff_t>(g.padding);
        for (std::size_t b = 0; b < g.batch; ++b) {
          double* plane = dx + (b * g.in_ch + c) * g.height * g.width;
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
            const double* src = row + b * L + oy * g.out_w;
            double* dst = plane + static_cast<std::size_t>(iy) * g.width;
            for (std::size_t ox = lo; ox < hi; ++ox) dst[static_cast<std::ptrdiff_t>(ox * g.stride) + off] += src[ox];
          }
        }
      }
}

}  // namespace detail

// Cross-correlation with zero padding. input [B,Cin,H,W], weight
// [Cout,Cin,kh,kw], bias [Cout] or undefined.
inline Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias = Tensor(), std::size_t stride = 1,
                     std::size_t padding = 0) {
  const auto g = conv2d_geometry(input.shape(), weight.shape(), stride, padding);
  if (bias.defined() && bias.numel() != g.out_ch) throw ShapeError("conv2d: bias size does not match Cout");
  const std::size_t K = g.in_ch * g.kh * g.kw, L = g.out_h * g.out_w, cols = g.batch * L;
  // Every entry is written by im2col, so skip value-initialization.
  std::shared_ptr<double[]> col(new double[K * cols]);
  detail::im2col(g, input.data().data(), col.get());
  std::unique_ptr<double[]> tmp(new double[g.out_ch * cols]);
  const auto eK = static_cast<Eigen::Index>(K), eC = static_cast<Eigen::Index>(cols),
             eO = static_cast<Eigen::Index>(g.out_ch);
  detail::MutMap(tmp.get(), eO, eC).noalias() =
      detail::ConstMap(weight.data().data(), eO, eK) * detail::ConstMap(col.get(), eK, eC);
  std::vector<double> out(g.batch * g.out_ch * L);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t co = 0; co < g.out_ch; ++co) {
      const double bv = bias.defined() ? bias.data()[co] : 0.0;
      const double* src = tmp.get() + co * cols + b * L;
      double* dst = out.data() + (b * g.out_ch + co) * L;
      for (std::size_t l = 0; l < L; ++l) dst[l] = src[l] + bv;
    }
  auto *xn = input.node(), *wn = weight.node();
  auto* bn = bias.defined() ? bias.node() : nullptr;
  std::vector<Tensor> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor::make_result(
      {g.batch, g.out_ch, g.out_h, g.out_w}, std::move(out), inputs,
      [xn, wn, bn, g, col, K, L, cols, eK, eC, eO](detail::Node& self) {
        std::unique_ptr<double[]> gt(new double[g.out_ch * cols]);
        for (std::size_t b = 0; b < g.batch; ++b)
          for (std::size_t co = 0; co < g.out_ch; ++co)
            std::copy_n(self.grad.data() + (b * g.out_ch + co) * L, L, gt.get() + co * cols + b * L);
        detail::ConstMap G(gt.get(), eO, eC);
        if (wn->requires_grad)
          detail::MutMap(wn->grad_buffer().data(), eO, eK).noalias() +=
              G * detail::ConstMap(col.get(), eK, eC).transpose();
        if (bn && bn->requires_grad)
          Eigen::Map<Eigen::VectorXd>(bn->grad_buffer().data(), eO) += G.rowwise().sum();
        if (xn->requires_grad) {
          std::unique_ptr<double[]> dcol(new double[K * cols]);
          detail::MutMap(dcol.get(), eK, eC).noalias() = detail::ConstMap(wn->value.data(), eO, eK).transpose() * G;
          detail::col2im_add(g, dcol.get(), xn->grad_buffer().data());
        }
      });
}

// ---- resampling and pooling -----------------------------------------------

namespace detail {

struct LerpTap {
  std::size_t i0, i1;
  double w1;
};

// Half-pixel (align_corners = false) source taps.
inline std::vector<LerpTap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<LerpTap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace detail

inline Tensor bilinear_upsample(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (x.dim() != 4) throw ShapeError("bilinear_upsample: input must be [B,C,H,W]");
  if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_upsample: zero-size output");
  const std::size_t B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  if (out_h < H || out_w < W) throw ShapeError("bilinear_upsample: output smaller than input");
  auto ty = detail::bilinear_taps(H, out_h), tx = detail::bilinear_taps(W, out_w);
  std::vector<double> out(B * C * out_h * out_w);
  for (std::size_t p = 0; p < B * C; ++p) {
    const double* src = x.data().data() + p * H * W;
    double* dst = out.data() + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[oy];
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[ox];
        const double top = src[a.i0 * W + b.i0] * (1.0 - b.w1) + src[a.i0 * W + b.i1] * b.w1;
        const double bot = src[a.i1 * W + b.i0] * (1.0 - b.w1) + src[a.i1 * W + b.i1] * b.w1;
        dst[oy * out_w + ox] = top * (1.0 - a.w1) + bot * a.w1;
      }
    }
  }
  auto* xn = x.node();
  return Tensor::make_result({B, C, out_h, out_w}, std::move(out), {x},
                             [xn, B, C, H, W, out_h, out_w, ty = std::move(ty), tx = std::move(tx)](detail::Node& self) {
                               auto gx = xn->grad_buffer();
                               for (std::size_t p = 0; p < B * C; ++p) {
                                 double* dst = gx.data() + p * H * W;
                                 const double* g = self.grad.data() + p * out_h * out_w;
                                 for (std::size_t oy = 0; oy < out_h; ++oy) {
                                   const auto& a = ty[oy];
                                   for (std::size_t ox = 0; ox < out_w; ++ox) {
                                     const auto& b = tx[ox];
                                     const double v = g[oy * out_w + ox];
                                     dst[a.i0 * W + b.i0] += v * (1.0 - a.w1) * (1.0 - b.w1);
                                     dst[a.i0 * W + b.i1] += v * (1.0 - a.w1) * b.w1;
                                     dst[a.i1 * W + b.i0] += v * a.w1 * (1.0 - b.w1);
                                     dst[a.i1 * W + b.i1] += v * a.w1 * b.w1;
                                   }
                                 }
                               }
                             });
}

// [B,C,H,W] -> [B,C], mean over the spatial positions.
inline Tensor global_avg_pool(const Tensor& x) {
  if (x.dim() != 4) throw ShapeError("global_avg_pool: input must be [B,C,H,W]");
  const std::size_t B = x.size(0), C = x.size(1), HW = x.size(2) * x.size(3);
  std::vector<double> out(B * C);
  for (std::size_t p = 0; p < B * C; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < HW; ++i) s += x.data()[p * HW + i];
    out[p] = s / static_cast<double>(HW);
  }
  auto* xn = x.node();
  return Tensor::make_result({B, C}, std::move(out), {x}, [xn, HW](detail::Node& self) {
    auto g = xn->grad_buffer();
    const double inv = 1.0 / static_cast<double>(HW);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i / HW] * inv;
  });
}

// Inverted dropout: survivors are scaled by 1/(1-p) so evaluation is identity.
inline Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ValidationError("dropout: probability must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  const double scale = 1.0 / (1.0 - p);
  std::vector<double> keep(x.numel());
  for (auto& k : keep) k = rng.bernoulli(p) ? 0.0 : scale;
  return mul_const(x, keep);
}

// Mean Huber loss between pred (any shape, one value per sample) and truth.
inline Tensor huber_loss(const Tensor& pred, const std::vector<double>& truth, double delta) {
  if (delta <= 0.0) throw ValidationError("huber_loss: delta must be positive");
  if (pred.numel() != truth.size()) throw ShapeError("huber_loss: prediction/target length mismatch");
  const std::size_t n = truth.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = pred.data()[i] - truth[i];
    const double ae = std::abs(e);
    total += ae <= delta ? 0.5 * e * e : delta * ae - 0.5 * delta * delta;
  }
  auto* pn = pred.node();
  return Tensor::make_result({1}, {total / static_cast<double>(n)}, {pred}, [pn, truth, delta, n](detail::Node& self) {
    auto g = pn->grad_buffer();
    const double s = self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double e = pn->value[i] - truth[i];
      g[i] += s * (std::abs(e) <= delta ? e : delta * (e > 0 ? 1.0 : -1.0));
    }
  });
}

}  // namespace occage::nc
