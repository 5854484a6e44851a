#pragma once

// Bridges 8-bit images and masks to network tensors.
// Images map to [-1, 1]; masks map 255 -> 1 (occluded), 0 -> 0.

#include <vector>

#include "occage/facegeom/image.hpp"
#include "occage/numcore/tensor.hpp"

namespace occage::fg {

inline nc::Tensor images_to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw ValidationError("images_to_tensor: empty batch");
  const std::size_t H = images[0]->height, W = images[0]->width;
  std::vector<double> v(images.size() * 3 * H * W);
  for (std::size_t b = 0; b < images.size(); ++b) {
    const Image& img = *images[b];
    if (img.height != H || img.width != W) throw ShapeError("images_to_tensor: images differ in size");
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
          v[((b * 3 + c) * H + y) * W + x] = img.at(y, x, img.channels == 3 ? c : 0) / 127.5 - 1.0;
  }
  return nc::Tensor({images.size(), 3, H, W}, std::move(v));
}

inline nc::Tensor images_to_tensor(const std::vector<Image>& images) {
  std::vector<const Image*> p;
  for (const auto& i : images) p.push_back(&i);
  return images_to_tensor(p);
}

inline Image tensor_to_image(const nc::Tensor& t, std::size_t b) {
  if (t.dim() != 4 || t.size(1) != 3) throw ShapeError("tensor_to_image: expected [B,3,H,W], got " + nc::to_string(t.shape()));
  const std::size_t H = t.size(2), W = t.size(3);
  Image img(H, W, 3);
  const auto d = t.data();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) img.at(y, x, c) = to_u8((d[((b * 3 + c) * H + y) * W + x] + 1.0) * 127.5);
  return img;
}

inline std::vector<double> mask_to_occupancy(const Mask& m) {
  std::vector<double> out(m.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = m.data[i] == 255 ? 1.0 : 0.0;
  return out;
}

inline Mask occupancy_to_mask(const std::vector<double>& occ, std::size_t h, std::size_t w) {
  if (occ.size() != h * w) throw ShapeError("occupancy_to_mask: size mismatch");
  Mask m(h, w);
  for (std::size_t i = 0; i < occ.size(); ++i) m.data[i] = occ[i] >= 0.5 ? 255 : 0;
  return m;
}

inline nc::Tensor masks_to_tensor(const std::vector<const Mask*>& masks) {
  if (masks.empty()) throw ValidationError("masks_to_tensor: empty batch");
  const std::size_t H = masks[0]->height, W = masks[0]->width;
  std::vector<double> v;
  v.reserve(masks.size() * H * W);
  for (const Mask* m : masks) {
    if (m->height != H || m->width != W) throw ShapeError("masks_to_tensor: masks differ in size");
    const auto occ = mask_to_occupancy(*m);
    v.insert(v.end(), occ.begin(), occ.end());
  }
  return nc::Tensor({masks.size(), 1, H, W}, std::move(v));
}

inline nc::Tensor masks_to_tensor(const std::vector<Mask>& masks) {
  std::vector<const Mask*> p;
  for (const auto& m : masks) p.push_back(&m);
  return masks_to_tensor(p);
}

// Byte-level composition: reconstructed pixels inside the mask, original outside.
inline Image composite(const Image& original, const Image& reconstructed, const Mask& mask) {
  if (original.height != reconstructed.height || original.width != reconstructed.width ||
      original.channels != reconstructed.channels || mask.height != original.height || mask.width != original.width)
    throw ShapeError("composite: size mismatch");
  Image out = original;
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x)
      if (mask.at(y, x) == 255)
        for (std::size_t c = 0; c < out.channels; ++c) out.at(y, x, c) = reconstructed.at(y, x, c);
  return out;
}

}  // namespace occage::fg
