#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <set>
#include <string>

#include "occage/agehead/head.hpp"
#include "occage/agenet/config.hpp"
#include "occage/pipeline/manifest.hpp"

namespace occage::pl {

struct TrainConfig {
  std::string preset = "paper";  // paper | toy
  double lr = 2e-5;
  double weight_decay = 5e-3;
  std::size_t batch_size = 16;
  double plateau_factor = 0.5;
  std::size_t plateau_patience = 5;
  double plateau_threshold = 1e-4;
  std::size_t folds = 5;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  std::string binning = "fgnet";
  ah::LossWeights weights;
  ah::PredictMode select_mode = ah::PredictMode::kBlend;  // drives the scheduler and checkpoint choice
  double blend_lambda = 0.5;
  std::size_t bn_recalibration = 96;  // fold-train images that re-estimate BatchNorm statistics before validation; 0 keeps the running averages
  std::optional<an::BackboneConfig> custom_backbone;  // overrides the preset's shapes

  an::BackboneConfig backbone() const {
    if (custom_backbone) {
      custom_backbone->validate();
      return *custom_backbone;
    }
    if (preset == "paper") return an::BackboneConfig::paper();
    if (preset == "toy") return an::BackboneConfig::toy();
    throw ValidationError("unknown preset '" + preset + "' (expected paper or toy)");
  }
  ah::AgeBinning bins() const { return ah::parse_binning(binning); }
  ah::Predictor predictor() const { return {select_mode, blend_lambda}; }

  void validate() const {
    backbone();
    bins();
    weights.validate();
    if (folds < 2) throw ValidationError("train config: folds must be at least 2");
    if (batch_size < 1) throw ValidationError("train config: batch_size must be at least 1");
    if (epochs < 1) throw ValidationError("train config: epochs must be at least 1");
    if (!(lr > 0)) throw ValidationError("train config: lr must be positive");
    if (!(weight_decay >= 0)) throw ValidationError("train config: weight_decay must be >= 0");
    if (!(plateau_factor > 0 && plateau_factor < 1)) throw ValidationError("train config: plateau_factor must lie in (0, 1)");
    if (!(plateau_threshold >= 0)) throw ValidationError("train config: plateau_threshold must be >= 0");
    if (!(blend_lambda >= 0 && blend_lambda <= 1)) throw ValidationError("train config: blend_lambda must lie in [0, 1]");
  }

  static TrainConfig paper() { return {}; }

  // Small backbone; the higher rate lets it converge within 30 short epochs.
  static TrainConfig toy() {
    TrainConfig c;
    c.preset = "toy";
    c.lr = 1e-3;
    c.batch_size = 8;
    return c;
  }

  static TrainConfig for_preset(const std::string& p) {
    if (p == "paper") return paper();
    if (p == "toy") return toy();
    throw ValidationError("unknown preset '" + p + "' (expected paper or toy)");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"preset", c.preset},
       {"lr", c.lr},
       {"weight_decay", c.weight_decay},
       {"batch_size", c.batch_size},
       {"plateau_factor", c.plateau_factor},
       {"plateau_patience", c.plateau_patience},
       {"plateau_threshold", c.plateau_threshold},
       {"folds", c.folds},
       {"epochs", c.epochs},
       {"seed", c.seed},
       {"binning", c.binning},
       {"weights", c.weights},
       {"select_mode", ah::to_string(c.select_mode)},
       {"blend_lambda", c.blend_lambda},
       {"bn_recalibration", c.bn_recalibration}};
  if (c.custom_backbone) j["backbone"] = *c.custom_backbone;
}

// Missing keys keep their current values, so a partial document overlays a preset.
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  static const std::set<std::string> known{"preset", "lr", "weight_decay", "batch_size", "plateau_factor",
                                           "plateau_patience", "plateau_threshold", "folds", "epochs", "seed",
                                           "binning", "weights", "select_mode", "blend_lambda", "bn_recalibration",
                                           "backbone"};
  if (!j.is_object()) throw ValidationError("train config: expected a JSON object");
  for (const auto& item : j.items())
    if (!known.count(item.key())) throw ValidationError("train config: unknown key '" + item.key() + "'");
  try {
    auto get = [&](const char* k, auto& field) {
      if (j.contains(k)) j.at(k).get_to(field);
    };
    get("preset", c.preset);
    get("lr", c.lr);
    get("weight_decay", c.weight_decay);
    get("batch_size", c.batch_size);
    get("plateau_factor", c.plateau_factor);
    get("plateau_patience", c.plateau_patience);
    get("plateau_threshold", c.plateau_threshold);
    get("folds", c.folds);
    get("epochs", c.epochs);
    get("seed", c.seed);
    get("binning", c.binning);
    get("weights", c.weights);
    get("blend_lambda", c.blend_lambda);
    get("bn_recalibration", c.bn_recalibration);
    if (j.contains("backbone")) c.custom_backbone = j.at("backbone").get<an::BackboneConfig>();
    if (j.contains("select_mode")) c.select_mode = ah::parse_mode(j.at("select_mode").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
}

}  // namespace occage::pl
