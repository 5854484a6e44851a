#pragma once

#include <array>
#include <vector>

#include "occage/agenet/swin.hpp"

namespace occage::an {

using nc::BatchNorm;

// Four spatial maps [B, C_i, s_i, s_i], channels doubling and sides halving.
struct StageFeatures {
  std::array<Tensor, kStages> maps;
};

// Blocks at one stage's resolution, then the merge into the next stage.
struct BlockGroup {
  std::vector<SwinBlock> blocks;
  PatchMerge merge;

  void collect(StateList& s, const std::string& p) const {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(s, join_name(p, "block" + std::to_string(i)));
    merge.collect(s, join_name(p, "merge"));
  }
};

// Stage 0 is the patch embedding itself; stage g+1 is group g's merged output.
struct Backbone {
  BackboneConfig config;
  PatchEmbed embed;
  std::array<BlockGroup, kGroups> groups;

  Backbone() = default;
  Backbone(const BackboneConfig& c, Rng& rng) : config(c) {
    c.validate();
    embed = PatchEmbed(c.patch_size, c.embed_dim, rng);
    for (std::size_t g = 0; g < kGroups; ++g) {
      const std::size_t win = c.window_at(g);
      const bool can_shift = c.side(g) > win;
      for (std::size_t b = 0; b < c.depths[g]; ++b)
        groups[g].blocks.emplace_back(c.channels(g), c.heads[g], win, (can_shift && b % 2 == 1) ? win / 2 : 0, c.mlp_ratio, rng);
      groups[g].merge = PatchMerge(c.channels(g), rng);
    }
  }

  StageFeatures operator()(const Tensor& img) const {
    if (img.dim() != 4 || img.size(2) != config.image_size || img.size(3) != config.image_size)
      throw ShapeError("backbone: expected [B,3," + std::to_string(config.image_size) + "," +
                       std::to_string(config.image_size) + "], got " + nc::to_string(img.shape()));
    StageFeatures out;
    Tensor x = embed(img);
    out.maps[0] = to_channels_first(x);
    for (std::size_t g = 0; g < kGroups; ++g) {
      for (const auto& b : groups[g].blocks) x = b(x);
      x = groups[g].merge(x);
      out.maps[g + 1] = to_channels_first(x);
    }
    return out;
  }

  void collect(StateList& s, const std::string& p) const {
    embed.collect(s, join_name(p, "embed"));
    for (std::size_t i = 0; i < kGroups; ++i) groups[i].collect(s, join_name(p, "group" + std::to_string(i)));
  }
};

// Token form [B, s*s, C] of a spatial map.
inline Tensor as_tokens(const Tensor& map) {
  return nc::reshape(to_channels_last(map), {map.size(0), map.size(2) * map.size(3), map.size(1)});
}

// Y = F ⊙ A + X, F from two conv-BN-ReLU layers, A a sigmoid channel
// bottleneck (C -> C/8 -> C) over F.
struct ArcmBlock {
  Conv2d conv1, conv2;
  BatchNorm bn1, bn2;
  Conv2d attn_reduce, attn_expand;

  ArcmBlock() = default;
  ArcmBlock(std::size_t c, Rng& rng)
      : conv1(c, c, 3, 1, 1, rng, nc::InitScheme::kTruncNormal, false),
        conv2(c, c, 3, 1, 1, rng, nc::InitScheme::kTruncNormal, false),
        bn1(c),
        bn2(c),
        attn_reduce(c, c / 8, 1, 1, 0, rng),
        attn_expand(c / 8, c, 1, 1, 0, rng) {}

  std::size_t channels() const { return conv1.in_channels(); }

  struct Parts {
    Tensor features;   // F_conv
    Tensor attention;  // A
    Tensor output;     // Y
  };

  Parts parts(const Tensor& x, bool training) const {
    if (x.dim() != 4 || x.size(1) != channels())
      throw ShapeError("arcm: expected " + std::to_string(channels()) + " channels, got " + nc::to_string(x.shape()));
    const Tensor f = nc::relu(bn2(conv2(nc::relu(bn1(conv1(x), training))), training));
    const Tensor a = nc::sigmoid(attn_expand(nc::relu(attn_reduce(f))));
    return {f, a, nc::add(nc::mul(f, a), x)};
  }

  Tensor operator()(const Tensor& x, bool training) const { return parts(x, training).output; }

  void collect(StateList& s, const std::string& p) const {
    conv1.collect(s, join_name(p, "conv1"));
    bn1.collect(s, join_name(p, "bn1"));
    conv2.collect(s, join_name(p, "conv2"));
    bn2.collect(s, join_name(p, "bn2"));
    attn_reduce.collect(s, join_name(p, "attn_reduce"));
    attn_expand.collect(s, join_name(p, "attn_expand"));
  }
};

// Project every stage to C_f, upsample to the stage-0 side, concat, then
// BN -> ReLU -> 1x1 conv and global average pooling.
struct Fusion {
  std::array<Conv2d, kStages> project;
  BatchNorm bn;
  Conv2d out;

  Fusion() = default;
  Fusion(const BackboneConfig& c, Rng& rng) : bn(kStages * c.fusion_dim), out(kStages * c.fusion_dim, c.fusion_dim, 1, 1, 0, rng) {
    for (std::size_t s = 0; s < kStages; ++s) project[s] = Conv2d(c.channels(s), c.fusion_dim, 1, 1, 0, rng);
  }

  std::size_t width() const { return out.out_channels(); }

  // Fused map before pooling, [B, C_f, s0, s0].
  Tensor fused_map(const std::array<Tensor, kStages>& ys, bool training) const {
    const std::size_t B = ys[0].size(0), side = ys[0].size(2);
    std::vector<Tensor> parts;
    for (std::size_t s = 0; s < kStages; ++s) {
      if (ys[s].dim() != 4 || ys[s].size(0) != B) throw ShapeError("fuse: stage maps disagree on batch size");
      Tensor p = project[s](ys[s]);
      if (p.size(2) != side || p.size(3) != side) p = nc::bilinear_upsample(p, side, side);
      parts.push_back(p);
    }
    return out(nc::relu(bn(nc::concat(parts, 1), training)));
  }

  Tensor operator()(const std::array<Tensor, kStages>& ys, bool training) const {
    return nc::global_avg_pool(fused_map(ys, training));
  }

  void collect(StateList& s, const std::string& p) const {
    for (std::size_t i = 0; i < kStages; ++i) project[i].collect(s, join_name(p, "project" + std::to_string(i)));
    bn.collect(s, join_name(p, "bn"));
    out.collect(s, join_name(p, "out"));
  }
};

// Backbone, per-stage ARCM and fusion: image -> F [B, C_f].
struct FeatureNet {
  Backbone backbone;
  std::array<ArcmBlock, kStages> arcm;
  Fusion fusion;

  FeatureNet() = default;
  FeatureNet(const BackboneConfig& c, Rng& rng) : backbone(c, rng), fusion(c, rng) {
    for (std::size_t s = 0; s < kStages; ++s) arcm[s] = ArcmBlock(c.channels(s), rng);
  }

  const BackboneConfig& config() const { return backbone.config; }

  Tensor operator()(const Tensor& img, bool training) const {
    const StageFeatures x = backbone(img);
    std::array<Tensor, kStages> y;
    for (std::size_t s = 0; s < kStages; ++s) y[s] = arcm[s](x.maps[s], training);
    return fusion(y, training);
  }

  std::vector<BatchNorm*> batch_norms() {
    std::vector<BatchNorm*> out;
    for (auto& a : arcm) out.insert(out.end(), {&a.bn1, &a.bn2});
    out.push_back(&fusion.bn);
    return out;
  }

  void collect(StateList& s, const std::string& p) const {
    backbone.collect(s, join_name(p, "backbone"));
    for (std::size_t i = 0; i < kStages; ++i) arcm[i].collect(s, join_name(p, "arcm" + std::to_string(i)));
    fusion.collect(s, join_name(p, "fusion"));
  }
};

}  // namespace occage::an
