#pragma once

// Parameterized building blocks and the state enumeration used by
// optimizers and checkpoints.

#include <string>
#include <unordered_set>
#include <vector>

#include "occage/core/rng.hpp"
#include "occage/numcore/nn.hpp"
#include "occage/numcore/spectral.hpp"

namespace occage::nc {

struct StateEntry {
  std::string name;
  Tensor tensor;
  bool trainable;
};

// Ordered list of named parameters (trainable) and buffers (running
// statistics, power-iteration vectors).
using StateList = std::vector<StateEntry>;

inline std::string join_name(const std::string& prefix, const std::string& leaf) {
  return prefix.empty() ? leaf : prefix + "." + leaf;
}

inline std::vector<Tensor> trainable(const StateList& s) {
  std::vector<Tensor> out;
  for (const auto& e : s)
    if (e.trainable) out.push_back(e.tensor);
  return out;
}

inline void check_unique_names(const StateList& s) {
  std::unordered_set<std::string> seen;
  for (const auto& e : s)
    if (!seen.insert(e.name).second) throw ValidationError("duplicate state name: " + e.name);
}

template <class Model>
StateList state_of(const Model& m) {
  StateList s;
  m.collect(s, "");
  check_unique_names(s);
  return s;
}

enum class InitScheme {
  kTruncNormal,  // N(0, 0.02^2) truncated at two standard deviations
  kKaiming,      // N(0, 2/fan_in)
};

inline Tensor init_weight(const Shape& shape, std::size_t fan_in, InitScheme scheme, Rng& rng) {
  std::vector<double> v(numel(shape));
  if (scheme == InitScheme::kTruncNormal) {
    for (auto& x : v) x = rng.trunc_normal(0.02);
  } else {
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& x : v) x = rng.normal() * sd;
  }
  return Tensor(shape, std::move(v), true);
}

struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, InitScheme scheme = InitScheme::kTruncNormal, bool with_bias = true)
      : weight(init_weight({out, in}, in, scheme, rng)) {
    if (with_bias) bias = Tensor::zeros({out}, true);
  }

  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }

  void collect(StateList& s, const std::string& prefix) const {
    s.push_back({join_name(prefix, "weight"), weight, true});
    if (bias.defined()) s.push_back({join_name(prefix, "bias"), bias, true});
  }
};

struct Conv2d {
  Tensor weight;
  Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride_, std::size_t padding_, Rng& rng,
         InitScheme scheme = InitScheme::kTruncNormal, bool with_bias = true)
      : weight(init_weight({out, in, kernel, kernel}, in * kernel * kernel, scheme, rng)),
        stride(stride_),
        padding(padding_) {
    if (with_bias) bias = Tensor::zeros({out}, true);
  }

  std::size_t in_channels() const { return weight.size(1); }
  std::size_t out_channels() const { return weight.size(0); }

  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }

  void collect(StateList& s, const std::string& prefix) const {
    s.push_back({join_name(prefix, "weight"), weight, true});
    if (bias.defined()) s.push_back({join_name(prefix, "bias"), bias, true});
  }
};

// Convolution whose weight is divided by its spectral norm on every
// forward; one power-iteration sweep per call unless power_opts says otherwise.
inline constexpr int kSnWarmStartIters = 50;

struct SnConv2d {
  Conv2d conv;
  PowerIterationState power;
  PowerIterationOptions power_opts{};

  SnConv2d() = default;
  SnConv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng,
           InitScheme scheme = InitScheme::kKaiming)
      : conv(in, out, kernel, stride, padding, rng, scheme), power(out, in * kernel * kernel, rng) {
    warm_start(kSnWarmStartIters);
  }

  void warm_start(int iters) {
    detail::power_sweep_n(conv.weight.data().data(), conv.weight.size(0), conv.weight.numel() / conv.weight.size(0),
                          power.u.mutable_data(), power.v.mutable_data(), iters);
  }

  // sigma_1 of the weight as the last forward normalized it, measured
  // independently of the running power-iteration state.
  double effective_sigma_max() const {
    const std::size_t rows = conv.weight.size(0), cols = conv.weight.numel() / rows;
    const double est = std::max(detail::bilinear_form(conv.weight.data().data(), rows, cols, power.u.data(), power.v.data()),
                                kSigmaFloor);
    return exact_sigma_max(conv.weight.data(), rows) / est;
  }

  Tensor normalized_weight() { return spectral_normalize(conv.weight, power, power_opts); }

  Tensor operator()(const Tensor& x) {
    return conv2d(x, normalized_weight(), conv.bias, conv.stride, conv.padding);
  }

  void collect(StateList& s, const std::string& prefix) const {
    conv.collect(s, prefix);
    s.push_back({join_name(prefix, "sn_u"), power.u, false});
    s.push_back({join_name(prefix, "sn_v"), power.v, false});
  }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t d) : gamma(Tensor::full({d}, 1.0, true)), beta(Tensor::zeros({d}, true)) {}

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }

  void collect(StateList& s, const std::string& prefix) const {
    s.push_back({join_name(prefix, "gamma"), gamma, true});
    s.push_back({join_name(prefix, "beta"), beta, true});
  }
};

struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t c)
      : gamma(Tensor::full({c}, 1.0, true)),
        beta(Tensor::zeros({c}, true)),
        running_mean(Tensor::zeros({c})),
        running_var(Tensor::full({c}, 1.0)) {}

  Tensor operator()(const Tensor& x, bool training) const {
    return batch_norm(x, gamma, beta, running_mean, running_var, training, momentum);
  }

  void collect(StateList& s, const std::string& prefix) const {
    s.push_back({join_name(prefix, "gamma"), gamma, true});
    s.push_back({join_name(prefix, "beta"), beta, true});
    s.push_back({join_name(prefix, "running_mean"), running_mean, false});
    s.push_back({join_name(prefix, "running_var"), running_var, false});
  }
};

// Deep copy of every entry's values, for best-checkpoint snapshots.
inline std::vector<std::vector<double>> snapshot(const StateList& s) {
  std::vector<std::vector<double>> out;
  out.reserve(s.size());
  for (const auto& e : s) out.push_back(e.tensor.values());
  return out;
}

inline void restore(const StateList& s, const std::vector<std::vector<double>>& snap) {
  if (snap.size() != s.size()) throw ValidationError("restore: snapshot does not match state list");
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto dst = s[i].tensor.mutable_data();
    if (dst.size() != snap[i].size()) throw ShapeError("restore: size mismatch for " + s[i].name);
    std::copy(snap[i].begin(), snap[i].end(), dst.begin());
  }
}

}  // namespace occage::nc
