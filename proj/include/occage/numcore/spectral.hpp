#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/SVD>

#include "occage/core/rng.hpp"
#include "occage/numcore/tensor.hpp"

namespace occage::nc {

inline constexpr double kSigmaFloor = 1e-12;

namespace detail {

inline void normalize_in_place(std::span<double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  const double n = std::max(std::sqrt(s), 1e-12);
  for (double& x : v) x /= n;
}

// One power-iteration sweep on the row-major [rows, cols] matrix w.
inline void power_sweep(const double* w, std::size_t rows, std::size_t cols, std::span<double> u, std::span<double> v) {
  std::fill(v.begin(), v.end(), 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    const double ui = u[i];
    const double* row = w + i * cols;
    for (std::size_t j = 0; j < cols; ++j) v[j] += row[j] * ui;
  }
  normalize_in_place(v);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += w[i * cols + j] * v[j];
    u[i] = s;
  }
  normalize_in_place(u);
}

inline void power_sweep_n(const double* w, std::size_t rows, std::size_t cols, std::span<double> u, std::span<double> v,
                          int iters) {
  for (int i = 0; i < iters; ++i) power_sweep(w, rows, cols, u, v);
}

inline double bilinear_form(const double* w, std::size_t rows, std::size_t cols, std::span<const double> u,
                            std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) s += u[i] * w[i * cols + j] * v[j];
  return s;
}

}  // namespace detail

// Persistent singular-vector estimates for one weight, viewed as
// [out, prod(rest)]. Stored as tensors so checkpoints capture them.
struct PowerIterationState {
  Tensor u;
  Tensor v;

  PowerIterationState() = default;
  PowerIterationState(std::size_t rows, std::size_t cols, Rng& rng)
      : u(Tensor::zeros({rows})), v(Tensor::zeros({cols})) {
    for (auto& x : u.mutable_data()) x = rng.normal();
    for (auto& x : v.mutable_data()) x = rng.normal();
    detail::normalize_in_place(u.mutable_data());
    detail::normalize_in_place(v.mutable_data());
  }
};

struct PowerIterationOptions {
  int min_iters = 1;
  double tolerance = 0.0;  // > 0: keep sweeping until sigma changes by less than this, relatively
  int max_iters = 1;
};

// weight / sigma_1, with sigma_1 = u^T W v after power-iteration sweeps that
// update the state in place. Gradients flow through sigma_1 with u and v
// held constant.
inline Tensor spectral_normalize(const Tensor& weight, PowerIterationState& state, const PowerIterationOptions& opt) {
  const std::size_t rows = weight.size(0);
  const std::size_t cols = weight.numel() / rows;
  if (state.u.numel() != rows || state.v.numel() != cols)
    throw ShapeError("spectral_normalize: power-iteration vectors do not match weight " + to_string(weight.shape()));
  const double* w = weight.data().data();
  auto u = state.u.mutable_data();
  auto v = state.v.mutable_data();
  for (int it = 0; it < opt.min_iters; ++it) detail::power_sweep(w, rows, cols, u, v);
  double raw = detail::bilinear_form(w, rows, cols, u, v);
  for (int it = opt.min_iters; opt.tolerance > 0 && it < opt.max_iters; ++it) {
    detail::power_sweep(w, rows, cols, u, v);
    const double next = detail::bilinear_form(w, rows, cols, u, v);
    const bool settled = std::abs(next - raw) <= opt.tolerance * std::abs(next);
    raw = next;
    if (settled) break;
  }
  const double sigma = std::max(raw, kSigmaFloor);
  std::vector<double> out(weight.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = w[i] / sigma;
  auto* wn = weight.node();
  std::vector<double> uc(u.begin(), u.end()), vc(v.begin(), v.end());
  const bool floored = raw < kSigmaFloor;
  return Tensor::make_result(weight.shape(), std::move(out), {weight},
                             [wn, uc = std::move(uc), vc = std::move(vc), sigma, rows, cols, floored](detail::Node& self) {
                               auto g = wn->grad_buffer();
                               double gw = 0.0;
                               for (std::size_t i = 0; i < g.size(); ++i) gw += self.grad[i] * wn->value[i];
                               const double k = floored ? 0.0 : gw / (sigma * sigma);
                               for (std::size_t i = 0; i < rows; ++i)
                                 for (std::size_t j = 0; j < cols; ++j)
                                   g[i * cols + j] += self.grad[i * cols + j] / sigma - k * uc[i] * vc[j];
                             });
}

inline Tensor spectral_normalize(const Tensor& weight, PowerIterationState& state, int iters) {
  return spectral_normalize(weight, state, PowerIterationOptions{iters, 0.0, iters});
}

// Fresh power-iteration estimate of the largest singular value.
inline double estimate_sigma_max(std::span<const double> w, std::size_t rows, int iters = 200, std::uint64_t seed = 7) {
  const std::size_t cols = w.size() / rows;
  Rng rng(seed);
  std::vector<double> u(rows), v(cols);
  for (auto& x : u) x = rng.normal();
  detail::normalize_in_place(u);
  for (int it = 0; it < iters; ++it) detail::power_sweep(w.data(), rows, cols, u, v);
  return detail::bilinear_form(w.data(), rows, cols, u, v);
}

// Largest singular value from a full SVD.
inline double exact_sigma_max(std::span<const double> w, std::size_t rows) {
  const std::size_t cols = w.size() / rows;
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
      w.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

}  // namespace occage::nc
