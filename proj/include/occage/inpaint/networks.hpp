#pragma once

#include <vector>

#include "occage/inpaint/attention.hpp"
#include "occage/inpaint/config.hpp"

namespace occage::ip {

using nc::Conv2d;
using nc::InitScheme;
using nc::join_name;
using nc::SnConv2d;
using nc::StateList;

// φ(W_f * x) ⊙ sigmoid(W_g * x). Both filters run as one convolution.
struct GatedConv {
  Conv2d feature;
  Conv2d gate;
  double slope = 0.2;
  bool activate = true;  // false: identity φ

  GatedConv() = default;
  GatedConv(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, Rng& rng, double slope_ = 0.2)
      : feature(in, out, kernel, stride, kernel / 2, rng, InitScheme::kKaiming),
        gate(in, out, kernel, stride, kernel / 2, rng, InitScheme::kKaiming),
        slope(slope_) {}

  std::size_t out_channels() const { return feature.out_channels(); }

  Tensor operator()(const Tensor& x) const {
    if (x.dim() != 4 || x.size(1) != feature.in_channels())
      throw ShapeError("gated_conv: expected " + std::to_string(feature.in_channels()) + " input channels, got " +
                       nc::to_string(x.shape()));
    const std::size_t C = out_channels();
    const Tensor w = nc::concat({feature.weight, gate.weight}, 0);
    const Tensor b = nc::concat({feature.bias, gate.bias}, 0);
    const Tensor both = nc::conv2d(x, w, b, feature.stride, feature.padding);
    Tensor f = nc::slice(both, 1, 0, C);
    if (activate) f = nc::leaky_relu(f, slope);
    return nc::mul(f, nc::sigmoid(nc::slice(both, 1, C, C)));
  }

  void collect(StateList& s, const std::string& p) const {
    feature.collect(s, join_name(p, "feature"));
    gate.collect(s, join_name(p, "gate"));
  }
};

// Repeats a [B,1,H,W] occupancy over C channels.
inline std::vector<double> expand_mask(const Tensor& m, std::size_t channels) {
  const std::size_t B = m.size(0), HW = m.size(2) * m.size(3);
  std::vector<double> out(B * channels * HW);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      std::copy_n(m.data().begin() + static_cast<long>(b * HW), HW, out.begin() + static_cast<long>((b * channels + c) * HW));
  return out;
}

// outside ⊙ (1 − M) + inside ⊙ M
inline Tensor blend(const Tensor& outside, const Tensor& inside, const Tensor& m) {
  const auto on = expand_mask(m, outside.size(1));
  std::vector<double> off(on.size());
  for (std::size_t i = 0; i < on.size(); ++i) off[i] = 1.0 - on[i];
  return nc::add(nc::mul_const(outside, off), nc::mul_const(inside, on));
}

inline void check_inputs(const Tensor& img, const Tensor& m, std::size_t factor) {
  if (img.dim() != 4 || img.size(1) != 3) throw ShapeError("inpaint: image batch must be [B,3,H,W], got " + nc::to_string(img.shape()));
  if (m.shape() != nc::Shape{img.size(0), 1, img.size(2), img.size(3)})
    throw ShapeError("inpaint: mask must be [B,1,H,W] matching the image, got " + nc::to_string(m.shape()));
  if (img.size(2) % factor || img.size(3) % factor)
    throw ShapeError("inpaint: spatial size must be divisible by " + std::to_string(factor));
}

inline Tensor upsample2(const Tensor& x) { return nc::bilinear_upsample(x, x.size(2) * 2, x.size(3) * 2); }

// Gated encoder (stride 2 twice) for [image, mask] input.
struct GatedEncoder {
  GatedConv e1, e2, e3, e4;

  GatedEncoder() = default;
  GatedEncoder(std::size_t in, std::size_t w, Rng& rng, double slope)
      : e1(in, w, 5, 1, rng, slope),
        e2(w, 2 * w, 3, 2, rng, slope),
        e3(2 * w, 2 * w, 3, 1, rng, slope),
        e4(2 * w, 4 * w, 3, 2, rng, slope) {}

  Tensor operator()(const Tensor& x) const { return e4(e3(e2(e1(x)))); }

  void collect(StateList& s, const std::string& p) const {
    e1.collect(s, join_name(p, "e1"));
    e2.collect(s, join_name(p, "e2"));
    e3.collect(s, join_name(p, "e3"));
    e4.collect(s, join_name(p, "e4"));
  }
};

// Mirrored decoder: two bilinear x2 upsamplings, then W_out (1x1) and tanh.
struct GatedDecoder {
  GatedConv d1, d2, d3, d4;
  Conv2d out;

  GatedDecoder() = default;
  GatedDecoder(std::size_t in, std::size_t w, Rng& rng, double slope)
      : d1(in, 2 * w, 3, 1, rng, slope),
        d2(2 * w, 2 * w, 3, 1, rng, slope),
        d3(2 * w, w, 3, 1, rng, slope),
        d4(w, w / 2, 3, 1, rng, slope),
        out(w / 2, 3, 1, 1, 0, rng, InitScheme::kKaiming) {}

  Tensor operator()(const Tensor& x) const {
    Tensor h = d2(d1(upsample2(x)));
    h = d4(d3(upsample2(h)));
    return nc::tanh(out(h));
  }

  void collect(StateList& s, const std::string& p) const {
    d1.collect(s, join_name(p, "d1"));
    d2.collect(s, join_name(p, "d2"));
    d3.collect(s, join_name(p, "d3"));
    d4.collect(s, join_name(p, "d4"));
    out.collect(s, join_name(p, "out"));
  }
};

struct CoarseNet {
  GatedEncoder enc;
  GatedDecoder dec;

  CoarseNet() = default;
  CoarseNet(const InpaintConfig& c, Rng& rng)
      : enc(4, c.width, rng, c.leaky_slope), dec(4 * c.width, c.width, rng, c.leaky_slope) {}

  Tensor operator()(const Tensor& img, const Tensor& m) const {
    check_inputs(img, m, InpaintConfig::kGeneratorDownsample);
    return dec(enc(nc::concat({img, m}, 1)));
  }

  void collect(StateList& s, const std::string& p) const {
    enc.collect(s, join_name(p, "enc"));
    dec.collect(s, join_name(p, "dec"));
  }
};

// Gated branch and contextual-attention branch, concatenated, then decoded.
struct RefineNet {
  GatedEncoder gated;
  GatedEncoder attn_enc;
  GatedConv attn_post;
  GatedDecoder dec;
  AttentionOptions attention;

  RefineNet() = default;
  RefineNet(const InpaintConfig& c, Rng& rng)
      : gated(4, c.width, rng, c.leaky_slope),
        attn_enc(4, c.width, rng, c.leaky_slope),
        attn_post(4 * c.width, 4 * c.width, 3, 1, rng, c.leaky_slope),
        dec(8 * c.width, c.width, rng, c.leaky_slope),
        attention{c.patch_size, c.temperature} {}

  Tensor operator()(const Tensor& img, const Tensor& m) const {
    check_inputs(img, m, InpaintConfig::kGeneratorDownsample);
    const Tensor x = nc::concat({img, m}, 1);
    const Tensor g = gated(x);
    const Tensor mf = downsample_mask(m, InpaintConfig::kGeneratorDownsample);
    const Tensor a = attn_post(contextual_attention(attn_enc(x), mf, attention));
    return dec(nc::concat({g, a}, 1));
  }

  void collect(StateList& s, const std::string& p) const {
    gated.collect(s, join_name(p, "gated"));
    attn_enc.collect(s, join_name(p, "attn_enc"));
    attn_post.collect(s, join_name(p, "attn_post"));
    dec.collect(s, join_name(p, "dec"));
  }
};

// SN-PatchGAN: strided spectrally normalized convs on [image, mask]; emits
// channels-last per-patch scores [B, h', w', c'].
struct Discriminator {
  std::vector<SnConv2d> layers;
  double slope = 0.2;

  Discriminator() = default;
  Discriminator(const InpaintConfig& c, Rng& rng) : slope(c.leaky_slope) {
    const std::size_t w = c.width;
    layers.emplace_back(4, w, 5, 2, 2, rng);
    layers.emplace_back(w, 2 * w, 5, 2, 2, rng);
    layers.emplace_back(2 * w, 4 * w, 5, 2, 2, rng);
    for (auto& l : layers) l.power_opts = {1, c.sn_tolerance, c.sn_max_iters};
  }

  Tensor operator()(const Tensor& img, const Tensor& m) {
    check_inputs(img, m, InpaintConfig::kDiscriminatorDownsample);
    Tensor h = nc::concat({img, m}, 1);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      h = layers[i](h);
      if (i + 1 < layers.size()) h = nc::leaky_relu(h, slope);
    }
    return nc::permute(h, {0, 2, 3, 1});
  }

  std::vector<double> layer_sigmas() const {
    std::vector<double> s;
    for (const auto& l : layers) s.push_back(l.effective_sigma_max());
    return s;
  }

  void collect(StateList& s, const std::string& p) const {
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(s, join_name(p, "l" + std::to_string(i)));
  }
};

struct HingeLosses {
  Tensor generator;      // −mean(fake)
  Tensor discriminator;  // mean(relu(1 − real)) + mean(relu(1 + fake))
};

inline HingeLosses hinge_losses(const Tensor& real, const Tensor& fake) {
  nc::check_same_shape(real, fake, "hinge_losses");
  return {nc::neg(nc::mean(fake)),
          nc::add(nc::mean(nc::relu(nc::add_scalar(nc::neg(real), 1.0))), nc::mean(nc::relu(nc::add_scalar(fake, 1.0))))};
}

struct InpaintOutput {
  Tensor coarse;
  Tensor refined;
  Tensor composited;
};

struct Inpainter {
  InpaintConfig config;
  CoarseNet coarse;
  RefineNet refine;
  Discriminator disc;

  Inpainter() = default;
  Inpainter(const InpaintConfig& c, Rng& rng) : config(c) {
    c.validate();
    Rng g = rng.fork(1), d = rng.fork(2);
    coarse = CoarseNet(c, g);
    refine = RefineNet(c, g);
    disc = Discriminator(c, d);
  }

  // I_oc in [-1,1], M with 1 = occluded.
  InpaintOutput forward(const Tensor& occluded, const Tensor& m) const {
    InpaintOutput out;
    out.coarse = coarse(occluded, m);
    out.refined = refine(blend(occluded, out.coarse, m), m);
    out.composited = blend(occluded, out.refined, m);
    return out;
  }

  void collect_generator(StateList& s, const std::string& p) const {
    coarse.collect(s, join_name(p, "coarse"));
    refine.collect(s, join_name(p, "refine"));
  }
  void collect(StateList& s, const std::string& p) const {
    collect_generator(s, p);
    disc.collect(s, join_name(p, "disc"));
  }
};

}  // namespace occage::ip
