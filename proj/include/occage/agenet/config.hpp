#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <string>

#include "occage/core/error.hpp"

namespace occage::an {

inline constexpr std::size_t kStages = 4;
// Transformer block groups; group g runs at stage g and is merged into stage g+1.
inline constexpr std::size_t kGroups = kStages - 1;

struct BackboneConfig {
  std::size_t image_size = 64;
  std::size_t patch_size = 4;
  std::size_t embed_dim = 32;
  std::array<std::size_t, kGroups> depths{1, 1, 2};
  std::array<std::size_t, kGroups> heads{2, 2, 4};
  std::size_t window = 4;
  std::size_t mlp_ratio = 4;
  std::size_t fusion_dim = 64;

  std::size_t side(std::size_t stage) const { return (image_size / patch_size) >> stage; }
  std::size_t channels(std::size_t stage) const { return embed_dim << stage; }

  // Stages whose map is no larger than the window attend over the whole map
  // and never shift.
  std::size_t window_at(std::size_t stage) const { return std::min(window, side(stage)); }

  void validate() const {
    if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0)
      throw ValidationError("backbone: image_size must be a positive multiple of patch_size");
    const std::size_t tokens = image_size / patch_size;
    if (tokens % (std::size_t{1} << (kStages - 1)) != 0)
      throw ValidationError("backbone: token side must halve cleanly over " + std::to_string(kStages) + " stages");
    if (window == 0) throw ValidationError("backbone: window must be positive");
    if (embed_dim == 0 || fusion_dim == 0 || mlp_ratio == 0) throw ValidationError("backbone: zero width");
    for (std::size_t s = 0; s < kGroups; ++s) {
      if (depths[s] == 0) throw ValidationError("backbone: every block group needs at least one block");
      if (heads[s] == 0 || channels(s) % heads[s] != 0)
        throw ValidationError("backbone: stage " + std::to_string(s) + " channels not divisible by its head count");
      if (side(s) % window_at(s) != 0)
        throw ValidationError("backbone: stage " + std::to_string(s) + " side " + std::to_string(side(s)) +
                              " not divisible by window " + std::to_string(window));
    }
    if (embed_dim < 8) throw ValidationError("backbone: embed_dim must be at least 8 for the ARCM bottleneck");
  }

  // 224 input, 4x4 patches, 128-wide embedding, 2/2/18 blocks, 7x7 windows.
  static BackboneConfig paper() {
    BackboneConfig c;
    c.image_size = 224;
    c.patch_size = 4;
    c.embed_dim = 128;
    c.depths = {2, 2, 18};
    c.heads = {4, 8, 16};
    c.window = 7;
    c.fusion_dim = 1024;
    return c;
  }

  static BackboneConfig toy() { return BackboneConfig{}; }
};

inline void to_json(nlohmann::json& j, const BackboneConfig& c) {
  j = nlohmann::json{{"image_size", c.image_size}, {"patch_size", c.patch_size}, {"embed_dim", c.embed_dim},
                     {"depths", c.depths},         {"heads", c.heads},           {"window", c.window},
                     {"mlp_ratio", c.mlp_ratio},   {"fusion_dim", c.fusion_dim}};
}

inline void from_json(const nlohmann::json& j, BackboneConfig& c) {
  if (!j.is_object()) throw ValidationError("backbone config must be a JSON object");
  const nlohmann::json known = c;
  for (const auto& item : j.items())
    if (!known.contains(item.key())) throw ValidationError("backbone config: unknown key '" + item.key() + "'");
  auto get = [&](const char* k, auto& field) {
    if (!j.contains(k)) return;
    try {
      j.at(k).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ValidationError(std::string("backbone config: bad value for '") + k + "'");
    }
  };
  for (const char* k : {"depths", "heads"})
    if (j.contains(k) && (!j.at(k).is_array() || j.at(k).size() != kGroups))
      throw ValidationError(std::string("backbone config: '") + k + "' needs " + std::to_string(kGroups) + " entries");
  get("image_size", c.image_size);
  get("patch_size", c.patch_size);
  get("embed_dim", c.embed_dim);
  get("depths", c.depths);
  get("heads", c.heads);
  get("window", c.window);
  get("mlp_ratio", c.mlp_ratio);
  get("fusion_dim", c.fusion_dim);
}

}  // namespace occage::an
