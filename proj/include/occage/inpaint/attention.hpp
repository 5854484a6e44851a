#pragma once

// Contextual attention over a feature map. Each occluded location's patch is
// matched by cosine similarity against every fully visible patch; the
// softmax-weighted sum of visible patches is folded back into the occluded
// locations, averaging overlapping writes.

#include <vector>

#include "occage/numcore/numcore.hpp"

namespace occage::ip {

using nc::Tensor;

struct AttentionOptions {
  std::size_t patch_size = 3;
  double temperature = 10.0;
};

struct AttentionResult {
  Tensor output;
  // Per sample: [missing, candidate] softmax weights (empty if nothing is occluded).
  std::vector<Tensor> weights;
  std::vector<std::vector<std::size_t>> missing;     // flat y*w+x per sample
  std::vector<std::vector<std::size_t>> candidates;  // flat y*w+x per sample
};

// Max-pools a [B,1,H,W] occupancy mask down by an integer factor.
inline Tensor downsample_mask(const Tensor& m, std::size_t factor) {
  if (m.dim() != 4 || m.size(1) != 1) throw ShapeError("downsample_mask: expected [B,1,H,W]");
  const std::size_t B = m.size(0), H = m.size(2), W = m.size(3);
  if (factor == 0 || H % factor || W % factor) throw ShapeError("downsample_mask: side not divisible by factor");
  const std::size_t h = H / factor, w = W / factor;
  std::vector<double> out(B * h * w, 0.0);
  const auto d = m.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        double& o = out[(b * h + y / factor) * w + x / factor];
        o = std::max(o, d[(b * H + y) * W + x]);
      }
  return Tensor({B, 1, h, w}, std::move(out));
}

inline AttentionResult contextual_attention_full(const Tensor& f, const Tensor& m, const AttentionOptions& opt = {}) {
  if (f.dim() != 4) throw ShapeError("contextual_attention: features must be [B,C,h,w], got " + nc::to_string(f.shape()));
  const std::size_t B = f.size(0), C = f.size(1), h = f.size(2), w = f.size(3);
  if (m.shape() != nc::Shape{B, 1, h, w})
    throw ShapeError("contextual_attention: mask must be [B,1,h,w] matching features, got " + nc::to_string(m.shape()));
  if (opt.patch_size % 2 == 0) throw ValidationError("contextual_attention: patch size must be odd");
  const auto k = static_cast<long>(opt.patch_size), r = k / 2;
  const std::size_t D = C * opt.patch_size * opt.patch_size;
  const auto md = m.data();
  auto occluded = [&](std::size_t b, long y, long x) {
    return y >= 0 && x >= 0 && y < static_cast<long>(h) && x < static_cast<long>(w) &&
           md[(b * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(x)] >= 0.5;
  };
  auto flat = [&](std::size_t b, std::size_t c, long y, long x) -> std::ptrdiff_t {
    if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return -1;
    return static_cast<std::ptrdiff_t>(((b * C + c) * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(x));
  };
  // Patch element order: channel, then row, then column.
  auto patch_index = [&](std::size_t b, const std::vector<std::size_t>& centers) {
    std::vector<std::ptrdiff_t> idx;
    idx.reserve(centers.size() * D);
    for (std::size_t p : centers) {
      const auto cy = static_cast<long>(p / w), cx = static_cast<long>(p % w);
      for (std::size_t c = 0; c < C; ++c)
        for (long dy = -r; dy <= r; ++dy)
          for (long dx = -r; dx <= r; ++dx) idx.push_back(flat(b, c, cy + dy, cx + dx));
    }
    return idx;
  };

  AttentionResult res;
  std::vector<double> keep(B * C * h * w, 1.0), scale(B * C * h * w, 0.0);
  Tensor folded;
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<std::size_t> miss, cand;
    for (long y = 0; y < static_cast<long>(h); ++y)
      for (long x = 0; x < static_cast<long>(w); ++x) {
        const auto p = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
        if (occluded(b, y, x)) {
          miss.push_back(p);
          continue;
        }
        bool clean = true;
        for (long dy = -r; dy <= r && clean; ++dy)
          for (long dx = -r; dx <= r && clean; ++dx) clean = !occluded(b, y + dy, x + dx);
        if (clean) cand.push_back(p);
      }
    res.missing.push_back(miss);
    res.candidates.push_back(cand);
    if (miss.empty()) {
      res.weights.emplace_back();
      continue;
    }
    if (cand.empty())
      throw ValidationError("contextual_attention: sample " + std::to_string(b) + " has no fully visible patch");

    const Tensor pm = nc::gather(f, patch_index(b, miss), {miss.size(), D});
    const Tensor pc = nc::gather(f, patch_index(b, cand), {cand.size(), D});
    const Tensor sim = nc::matmul(nc::normalize_rows(pm), nc::normalize_rows(pc), true);
    const Tensor attn = nc::softmax(nc::mul_scalar(sim, opt.temperature), 1);
    res.weights.push_back(attn);
    const Tensor rec = nc::matmul(attn, pc);

    // Fold: each reconstructed patch writes only onto occluded locations.
    std::vector<std::ptrdiff_t> dst;
    dst.reserve(miss.size() * D);
    std::vector<double> count(h * w, 0.0);
    for (std::size_t p : miss) {
      const auto cy = static_cast<long>(p / w), cx = static_cast<long>(p % w);
      for (std::size_t c = 0; c < C; ++c)
        for (long dy = -r; dy <= r; ++dy)
          for (long dx = -r; dx <= r; ++dx) {
            const bool on = occluded(b, cy + dy, cx + dx);
            dst.push_back(on ? flat(b, c, cy + dy, cx + dx) : -1);
            if (on && c == 0) count[static_cast<std::size_t>(cy + dy) * w + static_cast<std::size_t>(cx + dx)] += 1.0;
          }
    }
    for (std::size_t p : miss)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t i = (b * C + c) * h * w + p;
        keep[i] = 0.0;
        scale[i] = 1.0 / count[p];
      }
    const Tensor part = nc::scatter_add(rec, std::move(dst), f.shape());
    folded = folded.defined() ? nc::add(folded, part) : part;
  }
  res.output = folded.defined() ? nc::add(nc::mul_const(f, keep), nc::mul_const(folded, scale)) : f;
  return res;
}

inline Tensor contextual_attention(const Tensor& f, const Tensor& m, const AttentionOptions& opt = {}) {
  return contextual_attention_full(f, m, opt).output;
}

}  // namespace occage::ip
