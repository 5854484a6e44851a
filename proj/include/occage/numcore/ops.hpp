#pragma once

// Elementwise, shape and linear-algebra ops over Tensor.
//
// Broadcasting is deliberately absent except for add_trailing (a tensor
// added to every leading slice of another) and the scalar variants.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "occage/numcore/tensor.hpp"

namespace occage::nc {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

template <class F, class D>
Tensor unary_op(const Tensor& x, F f, D df) {
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  Node* xn = x.node();
  return Tensor::make_result(x.shape(), std::move(out), {x}, [xn, df](Node& self) {
    auto g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(xn->value[i], self.value[i]);
  });
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto *an = a.node(), *bn = b.node();
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node& self) {
    for (auto* n : {an, bn})
      if (n->requires_grad) {
        auto g = n->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  auto *an = a.node(), *bn = b.node();
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node& self) {
    if (an->requires_grad) {
      auto g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto *an = a.node(), *bn = b.node();
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node& self) {
    if (an->requires_grad) {
      auto g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      auto g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->value[i];
    }
  });
}

inline Tensor add_scalar(const Tensor& x, double c) {
  return detail::unary_op(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}
inline Tensor mul_scalar(const Tensor& x, double c) {
  return detail::unary_op(x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}
inline Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }

// a + b where b's shape equals the trailing dims of a's shape.
inline Tensor add_trailing(const Tensor& a, const Tensor& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (bs.size() > as.size() || !std::equal(bs.begin(), bs.end(), as.end() - static_cast<long>(bs.size())))
    throw ShapeError("add_trailing: " + to_string(bs) + " is not a suffix of " + to_string(as));
  const std::size_t inner = b.numel();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i % inner];
  auto *an = a.node(), *bn = b.node();
  return Tensor::make_result(as, std::move(out), {a, b}, [an, bn, inner](detail::Node& self) {
    if (an->requires_grad) {
      auto g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto g = bn->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % inner] += self.grad[i];
    }
  });
}

// Multiplies every leading slice of a by the constant pattern b (no gradient
// flows into b). Used for masks shared across channels.
inline Tensor mul_const(const Tensor& a, const std::vector<double>& pattern) {
  if (pattern.empty() || a.numel() % pattern.size() != 0) throw ShapeError("mul_const: pattern size mismatch");
  const std::size_t inner = pattern.size();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * pattern[i % inner];
  auto* an = a.node();
  return Tensor::make_result(a.shape(), std::move(out), {a}, [an, pattern](detail::Node& self) {
    auto g = an->grad_buffer();
    const std::size_t inner = pattern.size();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pattern[i % inner];
  });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor leaky_relu(const Tensor& x, double slope) {
  return detail::unary_op(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

inline double sigmoid_value(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary_op(x, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

inline Tensor silu(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return v * sigmoid_value(v); },
      [](double v, double) {
        const double s = sigmoid_value(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

inline Tensor tanh(const Tensor& x) {
  return detail::unary_op(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

// Exact (erf) GELU.
inline Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  return detail::unary_op(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [](double v, double) { return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(-0.5 * v * v); });
}

inline Tensor abs(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary_op(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& x) {
  return detail::unary_op(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Tensor square(const Tensor& x) {
  return detail::unary_op(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

// ---- reductions ------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
  const double s = std::accumulate(x.data().begin(), x.data().end(), 0.0);
  auto* xn = x.node();
  return Tensor::make_result({1}, {s}, {x}, [xn](detail::Node& self) {
    auto g = xn->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

inline Tensor mean(const Tensor& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel())); }

// ---- shape -----------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  auto* xn = x.node();
  return Tensor::make_result(std::move(shape), x.values(), {x}, [xn](detail::Node& self) {
    auto g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// out[i] = x[index[i]]; index -1 yields 0. Adjoint of scatter_add.
inline Tensor gather(const Tensor& x, std::vector<std::ptrdiff_t> index, Shape out_shape) {
  if (numel(out_shape) != index.size()) throw ShapeError("gather: index length does not match output shape");
  const auto n = static_cast<std::ptrdiff_t>(x.numel());
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto j = index[i];
    if (j >= n || j < -1) throw ShapeError("gather: index out of range");
    out[i] = j < 0 ? 0.0 : x.data()[static_cast<std::size_t>(j)];
  }
  auto* xn = x.node();
  return Tensor::make_result(std::move(out_shape), std::move(out), {x},
                             [xn, index = std::move(index)](detail::Node& self) {
                               auto g = xn->grad_buffer();
                               for (std::size_t i = 0; i < index.size(); ++i)
                                 if (index[i] >= 0) g[static_cast<std::size_t>(index[i])] += self.grad[i];
                             });
}

// out[index[i]] += x[i]; index -1 drops the element. Adjoint of gather.
inline Tensor scatter_add(const Tensor& x, std::vector<std::ptrdiff_t> index, Shape out_shape) {
  if (index.size() != x.numel()) throw ShapeError("scatter_add: index length does not match input");
  const auto n = static_cast<std::ptrdiff_t>(numel(out_shape));
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto j = index[i];
    if (j >= n || j < -1) throw ShapeError("scatter_add: index out of range");
    if (j >= 0) out[static_cast<std::size_t>(j)] += x.data()[i];
  }
  auto* xn = x.node();
  return Tensor::make_result(std::move(out_shape), std::move(out), {x},
                             [xn, index = std::move(index)](detail::Node& self) {
                               auto g = xn->grad_buffer();
                               for (std::size_t i = 0; i < index.size(); ++i)
                                 if (index[i] >= 0) g[i] += self.grad[static_cast<std::size_t>(index[i])];
                             });
}

inline Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const auto& s = x.shape();
  if (axes.size() != s.size()) throw ShapeError("permute: axis count mismatch");
  std::vector<bool> used(s.size(), false);
  Shape out_shape(s.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] >= s.size() || used[axes[i]]) throw ShapeError("permute: invalid axes");
    used[axes[i]] = true;
    out_shape[i] = s[axes[i]];
  }
  const auto in_st = detail::strides_of(s);
  std::vector<std::ptrdiff_t> index(x.numel());
  std::vector<std::size_t> pos(s.size(), 0);
  for (std::size_t i = 0; i < index.size(); ++i) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < axes.size(); ++d) src += pos[d] * in_st[axes[d]];
    index[i] = static_cast<std::ptrdiff_t>(src);
    for (std::size_t d = axes.size(); d-- > 0;) {
      if (++pos[d] < out_shape[d]) break;
      pos[d] = 0;
    }
  }
  return gather(x, std::move(index), std::move(out_shape));
}

inline Tensor transpose_last2(const Tensor& x) {
  std::vector<std::size_t> axes(x.dim());
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
  return permute(x, axes);
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape out_shape = parts[0].shape();
  if (axis >= out_shape.size()) throw ShapeError("concat: axis out of range");
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.dim() != out_shape.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < out_shape.size(); ++d)
      if (d != axis && p.size(d) != parts[0].size(d)) throw ShapeError("concat: shape mismatch off the concat axis");
    out_shape[axis] += p.size(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= out_shape[d];
  for (std::size_t d = axis + 1; d < out_shape.size(); ++d) inner *= out_shape[d];
  std::vector<double> out(numel(out_shape));
  std::vector<detail::Node*> nodes;
  std::vector<std::size_t> widths;
  const std::size_t row = out_shape[axis] * inner;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.size(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(p.data().begin() + static_cast<long>(o * w), w, out.begin() + static_cast<long>(o * row + offset));
    offset += w;
    nodes.push_back(p.node());
    widths.push_back(w);
  }
  return Tensor::make_result(std::move(out_shape), std::move(out), parts,
                             [nodes, widths, outer, row](detail::Node& self) {
                               std::size_t offset = 0;
                               for (std::size_t k = 0; k < nodes.size(); ++k) {
                                 const std::size_t w = widths[k];
                                 if (nodes[k]->requires_grad) {
                                   auto g = nodes[k]->grad_buffer();
                                   for (std::size_t o = 0; o < outer; ++o)
                                     for (std::size_t j = 0; j < w; ++j) g[o * w + j] += self.grad[o * row + offset + j];
                                 }
                                 offset += w;
                               }
                             });
}

inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const auto& s = x.shape();
  if (axis >= s.size() || start + length > s[axis] || length == 0) throw ShapeError("slice: range out of bounds");
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  Shape out_shape = s;
  out_shape[axis] = length;
  std::vector<std::ptrdiff_t> index;
  index.reserve(numel(out_shape));
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t a = 0; a < length; ++a)
      for (std::size_t i = 0; i < inner; ++i)
        index.push_back(static_cast<std::ptrdiff_t>((o * s[axis] + start + a) * inner + i));
  return gather(x, std::move(index), std::move(out_shape));
}

// ---- linear algebra --------------------------------------------------------

// Batched product over identical leading dims: a [..., n, k] times
// b [..., k, m] (or b [..., m, k] when transpose_b). A rank-2 b is shared
// across all leading slices of a.
inline Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false) {
  if (a.dim() < 2 || b.dim() < 2) throw ShapeError("matmul: operands must have rank >= 2");
  const auto& as = a.shape();
  const auto& bs = b.shape();
  const std::size_t n = as[as.size() - 2], k = as.back();
  const std::size_t bk = transpose_b ? bs.back() : bs[bs.size() - 2];
  const std::size_t m = transpose_b ? bs[bs.size() - 2] : bs.back();
  if (bk != k) throw ShapeError("matmul: inner dimensions differ " + to_string(as) + " x " + to_string(bs));
  const bool shared_b = bs.size() == 2;
  if (!shared_b && (bs.size() != as.size() || !std::equal(as.begin(), as.end() - 2, bs.begin())))
    throw ShapeError("matmul: batch dimensions differ " + to_string(as) + " x " + to_string(bs));
  const std::size_t batch = a.numel() / (n * k);
  Shape out_shape(as.begin(), as.end() - 2);
  out_shape.push_back(n);
  out_shape.push_back(m);
  std::vector<double> out(batch * n * m);
  const auto b_rows = static_cast<Eigen::Index>(transpose_b ? m : k);
  const auto b_cols = static_cast<Eigen::Index>(transpose_b ? k : m);
  const std::size_t b_step = shared_b ? 0 : k * m;
  const auto N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k), M = static_cast<Eigen::Index>(m);
  if (shared_b && !transpose_b) {
    detail::MutMap(out.data(), static_cast<Eigen::Index>(batch) * N, M).noalias() =
        detail::ConstMap(a.data().data(), static_cast<Eigen::Index>(batch) * N, K) *
        detail::ConstMap(b.data().data(), K, M);
  } else if (shared_b) {
    detail::MutMap(out.data(), static_cast<Eigen::Index>(batch) * N, M).noalias() =
        detail::ConstMap(a.data().data(), static_cast<Eigen::Index>(batch) * N, K) *
        detail::ConstMap(b.data().data(), M, K).transpose();
  } else {
    for (std::size_t t = 0; t < batch; ++t) {
      detail::ConstMap A(a.data().data() + t * n * k, N, K);
      detail::ConstMap B(b.data().data() + t * b_step, b_rows, b_cols);
      detail::MutMap C(out.data() + t * n * m, N, M);
      if (transpose_b)
        C.noalias() = A * B.transpose();
      else
        C.noalias() = A * B;
    }
  }
  auto *an = a.node(), *bn = b.node();
  return Tensor::make_result(
      std::move(out_shape), std::move(out), {a, b},
      [an, bn, batch, N, K, M, b_rows, b_cols, b_step, transpose_b](detail::Node& self) {
        for (std::size_t t = 0; t < batch; ++t) {
          detail::ConstMap G(self.grad.data() + t * static_cast<std::size_t>(N * M), N, M);
          detail::ConstMap B(bn->value.data() + t * b_step, b_rows, b_cols);
          detail::ConstMap A(an->value.data() + t * static_cast<std::size_t>(N * K), N, K);
          if (an->requires_grad) {
            detail::MutMap GA(an->grad_buffer().data() + t * static_cast<std::size_t>(N * K), N, K);
            if (transpose_b)
              GA.noalias() += G * B;
            else
              GA.noalias() += G * B.transpose();
          }
          if (bn->requires_grad) {
            detail::MutMap GB(bn->grad_buffer().data() + t * b_step, b_rows, b_cols);
            if (transpose_b)
              GB.noalias() += G.transpose() * A;
            else
              GB.noalias() += A.transpose() * G;
          }
        }
      });
}

// x [..., in] times weight [out, in] transposed, plus optional bias [out].
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = Tensor()) {
  if (weight.dim() != 2 || x.shape().back() != weight.size(1))
    throw ShapeError("linear: input " + to_string(x.shape()) + " incompatible with weight " + to_string(weight.shape()));
  const auto in = static_cast<Eigen::Index>(weight.size(1));
  const auto outf = static_cast<Eigen::Index>(weight.size(0));
  if (bias.defined() && (bias.dim() != 1 || bias.size(0) != weight.size(0)))
    throw ShapeError("linear: bias shape " + to_string(bias.shape()));
  const auto rows = static_cast<Eigen::Index>(x.numel()) / in;
  Shape out_shape = x.shape();
  out_shape.back() = static_cast<std::size_t>(outf);
  std::vector<double> out(static_cast<std::size_t>(rows * outf));
  detail::MutMap Y(out.data(), rows, outf);
  Y.noalias() = detail::ConstMap(x.data().data(), rows, in) * detail::ConstMap(weight.data().data(), outf, in).transpose();
  if (bias.defined())
    Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), outf);
  auto *xn = x.node(), *wn = weight.node();
  auto* bn = bias.defined() ? bias.node() : nullptr;
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor::make_result(std::move(out_shape), std::move(out), inputs,
                             [xn, wn, bn, rows, in, outf](detail::Node& self) {
                               detail::ConstMap G(self.grad.data(), rows, outf);
                               if (xn->requires_grad)
                                 detail::MutMap(xn->grad_buffer().data(), rows, in).noalias() +=
                                     G * detail::ConstMap(wn->value.data(), outf, in);
                               if (wn->requires_grad)
                                 detail::MutMap(wn->grad_buffer().data(), outf, in).noalias() +=
                                     G.transpose() * detail::ConstMap(xn->value.data(), rows, in);
                               if (bn && bn->requires_grad)
                                 Eigen::Map<Eigen::RowVectorXd>(bn->grad_buffer().data(), outf) += G.colwise().sum();
                             });
}

}  // namespace occage::nc
