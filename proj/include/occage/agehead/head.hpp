#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "occage/numcore/numcore.hpp"

namespace occage::ah {

using nc::join_name;
using nc::LayerNorm;
using nc::Linear;
using nc::StateList;
using nc::Tensor;

// Unit-width bins a_k = start + k, k in [0, count).
struct AgeBinning {
  int start = 0;
  std::size_t count = 70;

  double age(std::size_t k) const { return start + static_cast<double>(k); }
  double last() const { return age(count - 1); }
  bool contains(double a) const { return a >= start && a <= last(); }

  void validate() const {
    if (count < 2) throw ValidationError("binning: need at least 2 bins");
  }

  static AgeBinning fgnet() { return {0, 70}; }
  static AgeBinning morph() { return {16, 62}; }
  static AgeBinning utkface() { return {0, 117}; }

  bool operator==(const AgeBinning&) const = default;
};

inline void to_json(nlohmann::json& j, const AgeBinning& b) { j = {{"start", b.start}, {"count", b.count}}; }
inline void from_json(const nlohmann::json& j, AgeBinning& b) {
  try {
    if (j.contains("start")) j.at("start").get_to(b.start);
    if (j.contains("count")) j.at("count").get_to(b.count);
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("binning: start and count must be integers");
  }
}

inline AgeBinning parse_binning(const std::string& name) {
  if (name == "fgnet") return AgeBinning::fgnet();
  if (name == "morph") return AgeBinning::morph();
  if (name == "utkface") return AgeBinning::utkface();
  throw ValidationError("unknown binning '" + name + "' (expected fgnet, morph or utkface)");
}

inline constexpr double kOneHotSigma = 1e-6;

// Gaussian over bins centred at `age`, normalized to sum to one. Below
// kOneHotSigma it collapses to the nearest bin (lower bin on a tie).
inline std::vector<double> target_distribution(double age, const AgeBinning& bins, double sigma) {
  bins.validate();
  if (!std::isfinite(age)) throw ValidationError("target_distribution: age must be finite");
  if (!(sigma >= 0.0)) throw ValidationError("target_distribution: sigma must be >= 0");
  std::vector<double> t(bins.count, 0.0);
  if (sigma < kOneHotSigma) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < bins.count; ++k)
      if (std::abs(bins.age(k) - age) < std::abs(bins.age(best) - age)) best = k;
    t[best] = 1.0;
    return t;
  }
  const double inv = 1.0 / (2.0 * sigma * sigma);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < bins.count; ++k) {
    const double e = bins.age(k) - age;
    t[k] = -e * e * inv;
    top = std::max(top, t[k]);
  }
  double z = 0.0;
  for (auto& v : t) z += (v = std::exp(v - top));
  for (auto& v : t) v /= z;
  return t;
}

struct LossWeights {
  double alpha = 1.0;  // Huber
  double beta = 1.0;   // KL
  double delta = 1.0;
  double sigma = 2.0;

  void validate() const {
    if (!(alpha >= 0) || !(beta >= 0) || !(alpha + beta > 0)) throw ValidationError("loss weights: need alpha, beta >= 0 with alpha + beta > 0");
    if (!(delta > 0)) throw ValidationError("loss weights: delta must be positive");
    if (!(sigma > 0)) throw ValidationError("loss weights: sigma must be positive");
  }
};

inline void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"alpha", w.alpha}, {"beta", w.beta}, {"delta", w.delta}, {"sigma", w.sigma}};
}
inline void from_json(const nlohmann::json& j, LossWeights& w) {
  try {
    if (j.contains("alpha")) j.at("alpha").get_to(w.alpha);
    if (j.contains("beta")) j.at("beta").get_to(w.beta);
    if (j.contains("delta")) j.at("delta").get_to(w.delta);
    if (j.contains("sigma")) j.at("sigma").get_to(w.sigma);
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("loss weights must be numbers");
  }
}

struct HeadOutput {
  Tensor regression;  // [B,1]
  Tensor logits;      // [B,M]
};

// LN -> C_f -> SiLU -> drop 0.5 -> C_f/2 -> SiLU -> drop 0.4 -> {1, M}.
struct MtaHead {
  LayerNorm norm;
  Linear fc1, fc2;
  Linear regress, classify;
  double drop1 = 0.5, drop2 = 0.4;

  MtaHead() = default;
  MtaHead(std::size_t width, const AgeBinning& bins, Rng& rng)
      : norm(width), fc1(width, width, rng), fc2(width, width / 2, rng), regress(width / 2, 1, rng), classify(width / 2, bins.count, rng) {
    if (width < 2) throw ValidationError("head: width must be at least 2");
  }

  std::size_t width() const { return norm.gamma.numel(); }
  std::size_t bins() const { return classify.weight.size(0); }

  HeadOutput operator()(const Tensor& f, bool training, Rng& rng) const {
    if (f.dim() != 2 || f.size(1) != width())
      throw ShapeError("head: expected [B," + std::to_string(width()) + "], got " + nc::to_string(f.shape()));
    Tensor h = nc::dropout(nc::silu(fc1(norm(f))), drop1, training, rng);
    h = nc::dropout(nc::silu(fc2(h)), drop2, training, rng);
    return {regress(h), classify(h)};
  }

  void collect(StateList& s, const std::string& p) const {
    norm.collect(s, join_name(p, "norm"));
    fc1.collect(s, join_name(p, "fc1"));
    fc2.collect(s, join_name(p, "fc2"));
    regress.collect(s, join_name(p, "regress"));
    classify.collect(s, join_name(p, "classify"));
  }
};

// Batch mean of Σ_k T(k)(log T(k) − log P(k)), with 0·log 0 = 0.
inline Tensor kl_loss(const std::vector<std::vector<double>>& targets, const Tensor& log_probs) {
  if (log_probs.dim() != 2 || log_probs.size(0) != targets.size())
    throw ShapeError("kl_loss: expected one target row per log-prob row");
  const std::size_t B = targets.size(), M = log_probs.size(1);
  std::vector<double> w(B * M);
  double entropy_part = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    if (targets[b].size() != M) throw ShapeError("kl_loss: target length does not match bin count");
    for (std::size_t k = 0; k < M; ++k) {
      const double t = targets[b][k];
      w[b * M + k] = -t / static_cast<double>(B);
      if (t > 0) entropy_part += t * std::log(t);
    }
  }
  return nc::add_scalar(nc::sum(nc::mul_const(log_probs, w)), entropy_part / static_cast<double>(B));
}

struct AgeLoss {
  Tensor total;
  Tensor huber;
  Tensor kl;
};

inline AgeLoss combined_loss(const HeadOutput& out, const std::vector<double>& ages, const LossWeights& w,
                             const AgeBinning& bins) {
  w.validate();
  if (out.logits.size(1) != bins.count) throw ShapeError("combined_loss: logits width does not match binning");
  std::vector<std::vector<double>> targets;
  for (double a : ages) targets.push_back(target_distribution(a, bins, w.sigma));
  AgeLoss l;
  l.huber = nc::huber_loss(out.regression, ages, w.delta);
  l.kl = kl_loss(targets, nc::log_softmax(out.logits, 1));
  l.total = nc::add(nc::mul_scalar(l.huber, w.alpha), nc::mul_scalar(l.kl, w.beta));
  return l;
}

enum class PredictMode { kRegression, kExpectation, kBlend };

struct Predictor {
  PredictMode mode = PredictMode::kBlend;
  double lambda = 0.5;  // weight of the regression output in blend mode
};

inline PredictMode parse_mode(const std::string& s) {
  if (s == "regression") return PredictMode::kRegression;
  if (s == "expectation") return PredictMode::kExpectation;
  if (s == "blend") return PredictMode::kBlend;
  throw ValidationError("unknown prediction mode '" + s + "' (expected regression, expectation or blend)");
}

inline std::string to_string(PredictMode m) {
  switch (m) {
    case PredictMode::kRegression: return "regression";
    case PredictMode::kExpectation: return "expectation";
    case PredictMode::kBlend: return "blend";
  }
  return "?";
}

inline double expected_age(std::span<const double> logits, const AgeBinning& bins) {
  if (logits.size() != bins.count) throw ShapeError("expected_age: logits width does not match binning");
  double top = -std::numeric_limits<double>::infinity();
  for (double v : logits) top = std::max(top, v);
  double z = 0.0, s = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const double e = std::exp(logits[k] - top);
    z += e;
    s += e * bins.age(k);
  }
  return s / z;
}

inline double predict_age(double regression, std::span<const double> logits, const AgeBinning& bins, const Predictor& p) {
  switch (p.mode) {
    case PredictMode::kRegression: return regression;
    case PredictMode::kExpectation: return expected_age(logits, bins);
    case PredictMode::kBlend:
      return p.lambda * regression + (1.0 - p.lambda) * expected_age(logits, bins);
  }
  throw ValidationError("predict_age: unknown mode");
}

// Ages for every row of a head output.
struct AgePredictions {
  std::vector<double> regression, expectation;
};

inline AgePredictions predictions_of(const HeadOutput& out, const AgeBinning& bins) {
  AgePredictions p;
  const std::size_t B = out.regression.size(0), M = out.logits.size(1);
  for (std::size_t b = 0; b < B; ++b) {
    p.regression.push_back(out.regression.data()[b]);
    p.expectation.push_back(expected_age(out.logits.data().subspan(b * M, M), bins));
  }
  return p;
}

}  // namespace occage::ah
