#pragma once

// Brute-force contextual attention: enumerates every (occluded, visible) patch
// pair with explicit loops, then averages overlapping writes per pixel.

#include <cmath>
#include <vector>

namespace occage::testing {

struct AttentionOracleResult {
  std::vector<double> out;
  std::vector<std::vector<double>> weights;  // per sample, row-major [missing, candidate]
};

inline AttentionOracleResult attention_oracle(const std::vector<double>& f, const std::vector<double>& m, std::size_t B,
                                              std::size_t C, std::size_t H, std::size_t W, long k, double temperature) {
  const long r = k / 2, h = static_cast<long>(H), w = static_cast<long>(W);
  AttentionOracleResult res;
  res.out = f;
  auto occ = [&](std::size_t b, long y, long x) {
    return y >= 0 && x >= 0 && y < h && x < w && m[(b * H + static_cast<std::size_t>(y)) * W + static_cast<std::size_t>(x)] > 0.5;
  };
  auto val = [&](std::size_t b, std::size_t c, long y, long x) {
    if (y < 0 || x < 0 || y >= h || x >= w) return 0.0;
    return f[((b * C + c) * H + static_cast<std::size_t>(y)) * W + static_cast<std::size_t>(x)];
  };
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<std::pair<long, long>> miss, cand;
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        if (occ(b, y, x)) {
          miss.emplace_back(y, x);
          continue;
        }
        bool ok = true;
        for (long dy = -r; dy <= r; ++dy)
          for (long dx = -r; dx <= r; ++dx)
            if (occ(b, y + dy, x + dx)) ok = false;
        if (ok) cand.emplace_back(y, x);
      }
    std::vector<double> wts(miss.size() * cand.size());
    std::vector<double> acc(C * H * W, 0.0), cnt(H * W, 0.0);
    for (std::size_t i = 0; i < miss.size(); ++i) {
      const auto [my, mx] = miss[i];
      double nm = 0.0;
      for (std::size_t c = 0; c < C; ++c)
        for (long dy = -r; dy <= r; ++dy)
          for (long dx = -r; dx <= r; ++dx) nm += val(b, c, my + dy, mx + dx) * val(b, c, my + dy, mx + dx);
      nm = std::max(std::sqrt(nm), 1e-12);
      std::vector<double> logits(cand.size());
      for (std::size_t j = 0; j < cand.size(); ++j) {
        const auto [cy, cx] = cand[j];
        double dot = 0.0, nc = 0.0;
        for (std::size_t c = 0; c < C; ++c)
          for (long dy = -r; dy <= r; ++dy)
            for (long dx = -r; dx <= r; ++dx) {
              dot += val(b, c, my + dy, mx + dx) * val(b, c, cy + dy, cx + dx);
              nc += val(b, c, cy + dy, cx + dx) * val(b, c, cy + dy, cx + dx);
            }
        nc = std::max(std::sqrt(nc), 1e-12);
        logits[j] = temperature * dot / (nm * nc);
      }
      double mx_l = -1e300, z = 0.0;
      for (double l : logits) mx_l = std::max(mx_l, l);
      for (double l : logits) z += std::exp(l - mx_l);
      for (std::size_t j = 0; j < cand.size(); ++j) wts[i * cand.size() + j] = std::exp(logits[j] - mx_l) / z;
      for (long dy = -r; dy <= r; ++dy)
        for (long dx = -r; dx <= r; ++dx) {
          const long ty = my + dy, tx = mx + dx;
          if (!occ(b, ty, tx)) continue;
          cnt[static_cast<std::size_t>(ty * w + tx)] += 1.0;
          for (std::size_t c = 0; c < C; ++c) {
            double v = 0.0;
            for (std::size_t j = 0; j < cand.size(); ++j)
              v += wts[i * cand.size() + j] * val(b, c, cand[j].first + dy, cand[j].second + dx);
            acc[(c * H + static_cast<std::size_t>(ty)) * W + static_cast<std::size_t>(tx)] += v;
          }
        }
    }
    for (const auto& [y, x] : miss)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t p = static_cast<std::size_t>(y * w + x);
        res.out[(b * C + c) * H * W + p] = acc[c * H * W + p] / cnt[p];
      }
    res.weights.push_back(std::move(wts));
  }
  return res;
}

}  // namespace occage::testing
