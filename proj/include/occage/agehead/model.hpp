#pragma once

#include <cmath>

#include "occage/agehead/head.hpp"
#include "occage/agenet/agenet.hpp"

namespace occage::ah {

// Image [B,3,S,S] in [-1,1] -> regression and bin logits.
struct AgeModel {
  an::FeatureNet features;
  MtaHead head;
  AgeBinning binning;
  // Regression output is age_offset + age_scale * head output.
  double age_offset = 0.0, age_scale = 1.0;

  AgeModel() = default;
  AgeModel(const an::BackboneConfig& c, const AgeBinning& bins, Rng& rng) : binning(bins) {
    bins.validate();
    Rng f = rng.fork(11), h = rng.fork(12);
    features = an::FeatureNet(c, f);
    head = MtaHead(c.fusion_dim, bins, h);
  }

  const an::BackboneConfig& config() const { return features.config(); }

  HeadOutput operator()(const Tensor& img, bool training, Rng& dropout_rng) const {
    HeadOutput out = head(features(img, training), training, dropout_rng);
    if (age_scale != 1.0 || age_offset != 0.0)
      out.regression = nc::add_scalar(nc::mul_scalar(out.regression, age_scale), age_offset);
    return out;
  }

  // Eval-mode forward without a random stream.
  HeadOutput eval(const Tensor& img) const {
    Rng unused(0);
    return (*this)(img, false, unused);
  }

  void set_regression_bias(double age) { head.regress.bias.mutable_data()[0] = age; }

  // Head regresses (age - mean) / spread; its bias starts at zero.
  void set_age_units(double mean, double spread) {
    if (!std::isfinite(mean) || !(spread > 0) || !std::isfinite(spread))
      throw ValidationError("age units: spread must be positive and finite");
    age_offset = mean;
    age_scale = spread;
    head.regress.bias.mutable_data()[0] = 0.0;
  }

  void collect(StateList& s, const std::string& p) const {
    features.collect(s, join_name(p, "features"));
    head.collect(s, join_name(p, "head"));
  }
};

inline nlohmann::json model_config_json(const AgeModel& m) {
  return {{"kind", "age_model"}, {"backbone", m.config()},     {"binning", m.binning},
          {"age_offset", m.age_offset}, {"age_scale", m.age_scale}};
}

inline void save_age_model(const std::string& path, const AgeModel& m, nlohmann::json extra = nlohmann::json::object()) {
  nlohmann::json cfg = model_config_json(m);
  for (const auto& item : extra.items()) cfg[item.key()] = item.value();
  nc::save_checkpoint(path, nc::state_of(m), cfg);
}

inline AgeModel load_age_model(const std::string& path) {
  const auto ar = nc::load_checkpoint(path);
  if (ar.config.value("kind", "") != "age_model") throw IoError(path + " is not an age-model checkpoint");
  an::BackboneConfig c;
  AgeBinning b;
  try {
    c = ar.config.at("backbone").get<an::BackboneConfig>();
    b = ar.config.at("binning").get<AgeBinning>();
  } catch (const nlohmann::json::exception&) {
    throw IoError(path + ": malformed age-model config");
  } catch (const ValidationError& e) {
    throw IoError(path + ": " + e.what());
  }
  Rng rng(0);
  AgeModel m(c, b, rng);
  try {
    m.age_offset = ar.config.value("age_offset", 0.0);
    m.age_scale = ar.config.value("age_scale", 1.0);
  } catch (const nlohmann::json::exception&) {
    throw IoError(path + ": malformed age units");
  }
  nc::load_state(nc::state_of(m), ar);
  return m;
}

}  // namespace occage::ah
