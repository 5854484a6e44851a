#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "occage/agenet/config.hpp"
#include "occage/numcore/numcore.hpp"

namespace occage::an {

using nc::Conv2d;
using nc::join_name;
using nc::LayerNorm;
using nc::Linear;
using nc::StateList;
using nc::Tensor;

// Token maps are channels-last [B, h, w, C] inside the transformer.
inline Tensor to_channels_last(const Tensor& x) { return nc::permute(x, {0, 2, 3, 1}); }
inline Tensor to_channels_first(const Tensor& x) { return nc::permute(x, {0, 3, 1, 2}); }

struct PatchEmbed {
  Conv2d proj;
  LayerNorm norm;
  std::size_t patch = 4;

  PatchEmbed() = default;
  PatchEmbed(std::size_t patch_, std::size_t dim, Rng& rng) : proj(3, dim, patch_, patch_, 0, rng), norm(dim), patch(patch_) {}

  // [B,3,S,S] -> [B, S/P, S/P, D0]
  Tensor operator()(const Tensor& img) const {
    if (img.dim() != 4 || img.size(1) != 3) throw ShapeError("patch_embed: expected [B,3,S,S], got " + nc::to_string(img.shape()));
    if (img.size(2) % patch || img.size(3) % patch)
      throw ShapeError("patch_embed: side " + std::to_string(img.size(2)) + " not divisible by patch " + std::to_string(patch));
    return norm(to_channels_last(proj(img)));
  }

  void collect(StateList& s, const std::string& p) const {
    proj.collect(s, join_name(p, "proj"));
    norm.collect(s, join_name(p, "norm"));
  }
};

namespace detail {

struct WindowLayout {
  std::size_t B, H, W, C, win, shift, nh, nw;
  std::size_t windows() const { return B * nh * nw; }
  std::size_t tokens() const { return win * win; }

  // Flat [B,H,W,·] position of token t in window n, after the cyclic shift.
  std::size_t source(std::size_t n, std::size_t t) const {
    const std::size_t b = n / (nh * nw), iy = n / nw % nh, ix = n % nw;
    const std::size_t y = (iy * win + t / win + shift) % H, x = (ix * win + t % win + shift) % W;
    return (b * H + y) * W + x;
  }
};

inline WindowLayout window_layout(const Tensor& x, std::size_t win, std::size_t shift) {
  if (x.dim() != 4) throw ShapeError("window attention: expected [B,h,w,C], got " + nc::to_string(x.shape()));
  const std::size_t H = x.size(1), W = x.size(2);
  if (win == 0 || H % win || W % win)
    throw ShapeError("window attention: side " + std::to_string(H) + "x" + std::to_string(W) + " not divisible by window " +
                     std::to_string(win));
  if (shift >= win) throw ShapeError("window attention: shift must be smaller than the window");
  return {x.size(0), H, W, x.size(3), win, shift, H / win, W / win};
}

// Pulls one of q/k/v (slot 0/1/2) out of a [B,H,W,3C] projection as
// [windows, heads, N, d].
inline Tensor split_heads(const Tensor& qkv, const WindowLayout& L, std::size_t heads, std::size_t slot) {
  const std::size_t N = L.tokens(), d = L.C / heads;
  std::vector<std::ptrdiff_t> idx;
  idx.reserve(L.windows() * L.C * N);
  for (std::size_t n = 0; n < L.windows(); ++n)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < N; ++t) {
        const std::size_t base = L.source(n, t) * 3 * L.C + slot * L.C + h * d;
        for (std::size_t e = 0; e < d; ++e) idx.push_back(static_cast<std::ptrdiff_t>(base + e));
      }
  return nc::gather(qkv, std::move(idx), {L.windows(), heads, N, d});
}

// Inverse of split_heads for a single slot: [windows, heads, N, d] -> [B,H,W,C].
inline Tensor merge_heads(const Tensor& o, const WindowLayout& L, std::size_t heads) {
  const std::size_t N = L.tokens(), d = L.C / heads;
  std::vector<std::ptrdiff_t> idx(L.B * L.H * L.W * L.C);
  for (std::size_t n = 0; n < L.windows(); ++n)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < N; ++t) {
        const std::size_t dst = L.source(n, t) * L.C + h * d;
        const std::size_t src = ((n * heads + h) * N + t) * d;
        for (std::size_t e = 0; e < d; ++e) idx[dst + e] = static_cast<std::ptrdiff_t>(src + e);
      }
  return nc::gather(o, std::move(idx), {L.B, L.H, L.W, L.C});
}

// Table row for the offset between tokens i and j of a win x win window.
inline std::vector<std::ptrdiff_t> relative_index(std::size_t win, std::size_t heads) {
  const std::size_t N = win * win, span = 2 * win - 1;
  std::vector<std::ptrdiff_t> idx(heads * N * N);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        const std::size_t dy = i / win + win - 1 - j / win, dx = i % win + win - 1 - j % win;
        idx[(h * N + i) * N + j] = static_cast<std::ptrdiff_t>((dy * span + dx) * heads + h);
      }
  return idx;
}

inline constexpr double kMaskedLogit = -1e9;

// Blocks attention between tokens that the cyclic shift brought together from
// opposite edges of the map.
inline std::vector<double> shift_mask(const WindowLayout& L, std::size_t heads) {
  const std::size_t N = L.tokens();
  std::vector<double> m(L.windows() * heads * N * N, 0.0);
  if (L.shift == 0) return m;
  auto region = [&](std::size_t v, std::size_t side) { return v < side - L.win ? 0 : (v < side - L.shift ? 1 : 2); };
  std::vector<int> label(N);
  for (std::size_t n = 0; n < L.windows(); ++n) {
    const std::size_t iy = n / L.nw % L.nh, ix = n % L.nw;
    for (std::size_t t = 0; t < N; ++t)
      label[t] = region(iy * L.win + t / L.win, L.H) * 3 + region(ix * L.win + t % L.win, L.W);
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j)
          if (label[i] != label[j]) m[((n * heads + h) * N + i) * N + j] = kMaskedLogit;
  }
  return m;
}

}  // namespace detail

struct WindowAttention {
  Linear qkv;
  Linear proj;
  Tensor bias_table;  // [(2w-1)^2, heads]
  std::size_t heads = 1;
  std::size_t window = 1;

  WindowAttention() = default;
  WindowAttention(std::size_t dim, std::size_t heads_, std::size_t window_, Rng& rng)
      : qkv(dim, 3 * dim, rng), proj(dim, dim, rng), heads(heads_), window(window_) {
    const std::size_t span = 2 * window - 1;
    std::vector<double> t(span * span * heads);
    for (auto& v : t) v = rng.trunc_normal(0.02);
    bias_table = Tensor({span * span, heads}, std::move(t), true);
  }

  // x: [B,H,W,C] (already normalized). weights, if given, receives the
  // softmax maps [windows, heads, N, N].
  Tensor operator()(const Tensor& x, std::size_t shift, Tensor* weights = nullptr) const {
    const auto L = detail::window_layout(x, window, shift);
    if (L.C != proj.weight.size(0) || L.C % heads)
      throw ShapeError("window attention: channel count " + std::to_string(L.C) + " does not match the block");
    const std::size_t N = L.tokens(), d = L.C / heads;
    const Tensor all = qkv(x);
    const Tensor q = detail::split_heads(all, L, heads, 0);
    const Tensor k = detail::split_heads(all, L, heads, 1);
    const Tensor v = detail::split_heads(all, L, heads, 2);
    Tensor logits = nc::mul_scalar(nc::matmul(q, k, true), 1.0 / std::sqrt(static_cast<double>(d)));
    logits = nc::add_trailing(logits, nc::gather(bias_table, detail::relative_index(window, heads), {heads, N, N}));
    if (shift) logits = nc::add(logits, Tensor(logits.shape(), detail::shift_mask(L, heads)));
    const Tensor a = nc::softmax(logits, 3);
    if (weights) *weights = a;
    return proj(detail::merge_heads(nc::matmul(a, v), L, heads));
  }

  void collect(StateList& s, const std::string& p) const {
    qkv.collect(s, join_name(p, "qkv"));
    proj.collect(s, join_name(p, "proj"));
    s.push_back({join_name(p, "rel_bias"), bias_table, true});
  }
};

// Pre-norm transformer block: x + attn(LN(x)), then x + MLP(LN(x)).
struct SwinBlock {
  LayerNorm norm1, norm2;
  WindowAttention attn;
  Linear fc1, fc2;
  std::size_t shift = 0;

  SwinBlock() = default;
  SwinBlock(std::size_t dim, std::size_t heads, std::size_t window, std::size_t shift_, std::size_t mlp_ratio, Rng& rng)
      : norm1(dim), norm2(dim), attn(dim, heads, window, rng), fc1(dim, mlp_ratio * dim, rng), fc2(mlp_ratio * dim, dim, rng),
        shift(shift_) {}

  Tensor operator()(const Tensor& x) const {
    const Tensor h = nc::add(x, attn(norm1(x), shift));
    return nc::add(h, fc2(nc::gelu(fc1(norm2(h)))));
  }

  void collect(StateList& s, const std::string& p) const {
    norm1.collect(s, join_name(p, "norm1"));
    attn.collect(s, join_name(p, "attn"));
    norm2.collect(s, join_name(p, "norm2"));
    fc1.collect(s, join_name(p, "fc1"));
    fc2.collect(s, join_name(p, "fc2"));
  }
};

// [B,h,w,C] -> [B,h/2,w/2,2C]: 2x2 neighbourhood concat, LN, linear 4C -> 2C.
struct PatchMerge {
  LayerNorm norm;
  Linear reduce;

  PatchMerge() = default;
  PatchMerge(std::size_t dim, Rng& rng) : norm(4 * dim), reduce(4 * dim, 2 * dim, rng, nc::InitScheme::kTruncNormal, false) {}

  Tensor operator()(const Tensor& x) const {
    if (x.dim() != 4) throw ShapeError("patch_merge: expected [B,h,w,C], got " + nc::to_string(x.shape()));
    const std::size_t B = x.size(0), H = x.size(1), W = x.size(2), C = x.size(3);
    if (H % 2 || W % 2) throw ShapeError("patch_merge: odd side " + std::to_string(H) + "x" + std::to_string(W));
    if (4 * C != norm.gamma.numel()) throw ShapeError("patch_merge: channel count does not match");
    // Neighbour order (0,0), (1,0), (0,1), (1,1) as (dy, dx).
    constexpr std::size_t dy[4] = {0, 1, 0, 1}, dx[4] = {0, 0, 1, 1};
    std::vector<std::ptrdiff_t> idx;
    idx.reserve(x.numel());
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t y = 0; y < H / 2; ++y)
        for (std::size_t xx = 0; xx < W / 2; ++xx)
          for (std::size_t q = 0; q < 4; ++q) {
            const std::size_t base = ((b * H + 2 * y + dy[q]) * W + 2 * xx + dx[q]) * C;
            for (std::size_t c = 0; c < C; ++c) idx.push_back(static_cast<std::ptrdiff_t>(base + c));
          }
    return reduce(norm(nc::gather(x, std::move(idx), {B, H / 2, W / 2, 4 * C})));
  }

  void collect(StateList& s, const std::string& p) const {
    norm.collect(s, join_name(p, "norm"));
    reduce.collect(s, join_name(p, "reduce"));
  }
};

}  // namespace occage::an
