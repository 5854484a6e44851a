#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "occage/agehead/agehead.hpp"
#include "occage/evalkit/metrics.hpp"
#include "occage/facegeom/image_io.hpp"
#include "occage/facegeom/tensorize.hpp"
#include "occage/pipeline/config.hpp"

namespace occage::pl {

// A test record appeared in some fold's training or validation data.
class LeakageError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0, train_huber = 0.0, train_kl = 0.0;
  double val_loss = 0.0, val_mae = 0.0;
  bool operator==(const EpochLog&) const = default;
};

struct FoldLog {
  int fold = 0;
  std::size_t train_size = 0, val_size = 0;
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  double best_val_mae = 0.0;
  std::size_t lr_reductions = 0;
  std::string checkpoint;  // relative to the record's directory; empty when nothing was written
  bool operator==(const FoldLog&) const = default;
};

struct TestPrediction {
  std::string id;
  double truth = 0.0;
  double regression = 0.0, expectation = 0.0, blend = 0.0;  // means over the fold models
  bool operator==(const TestPrediction&) const = default;
};

struct StageLog {
  std::string stage;
  nlohmann::json detail;
  bool operator==(const StageLog&) const = default;
};

struct RunRecord {
  nlohmann::json config;
  std::vector<StageLog> stages;
  std::vector<FoldLog> folds;
  std::vector<TestPrediction> test;
  std::map<std::string, double> test_mae;  // per prediction mode
  double baseline_mae = 0.0;               // predict-the-train-mean on the test split
  double train_mean = 0.0;
  bool operator==(const RunRecord&) const = default;
};

inline void to_json(nlohmann::json& j, const EpochLog& e) {
  j = {{"epoch", e.epoch},           {"lr", e.lr},           {"train_loss", e.train_loss},
       {"train_huber", e.train_huber}, {"train_kl", e.train_kl}, {"val_loss", e.val_loss},
       {"val_mae", e.val_mae}};
}
inline void from_json(const nlohmann::json& j, EpochLog& e) {
  j.at("epoch").get_to(e.epoch);
  j.at("lr").get_to(e.lr);
  j.at("train_loss").get_to(e.train_loss);
  j.at("train_huber").get_to(e.train_huber);
  j.at("train_kl").get_to(e.train_kl);
  j.at("val_loss").get_to(e.val_loss);
  j.at("val_mae").get_to(e.val_mae);
}

inline void to_json(nlohmann::json& j, const FoldLog& f) {
  j = {{"fold", f.fold},           {"train_size", f.train_size},       {"val_size", f.val_size},
       {"epochs", f.epochs},       {"best_epoch", f.best_epoch},       {"best_val_mae", f.best_val_mae},
       {"lr_reductions", f.lr_reductions}, {"checkpoint", f.checkpoint}};
}
inline void from_json(const nlohmann::json& j, FoldLog& f) {
  j.at("fold").get_to(f.fold);
  j.at("train_size").get_to(f.train_size);
  j.at("val_size").get_to(f.val_size);
  j.at("epochs").get_to(f.epochs);
  j.at("best_epoch").get_to(f.best_epoch);
  j.at("best_val_mae").get_to(f.best_val_mae);
  j.at("lr_reductions").get_to(f.lr_reductions);
  j.at("checkpoint").get_to(f.checkpoint);
}

inline void to_json(nlohmann::json& j, const TestPrediction& p) {
  j = {{"id", p.id}, {"truth", p.truth}, {"regression", p.regression}, {"expectation", p.expectation}, {"blend", p.blend}};
}
inline void from_json(const nlohmann::json& j, TestPrediction& p) {
  j.at("id").get_to(p.id);
  j.at("truth").get_to(p.truth);
  j.at("regression").get_to(p.regression);
  j.at("expectation").get_to(p.expectation);
  j.at("blend").get_to(p.blend);
}

inline void to_json(nlohmann::json& j, const StageLog& s) { j = {{"stage", s.stage}, {"detail", s.detail}}; }
inline void from_json(const nlohmann::json& j, StageLog& s) {
  j.at("stage").get_to(s.stage);
  s.detail = j.at("detail");
}

inline void to_json(nlohmann::json& j, const RunRecord& r) {
  j = {{"config", r.config},     {"stages", r.stages},           {"folds", r.folds},
       {"test", r.test},         {"test_mae", r.test_mae},       {"baseline_mae", r.baseline_mae},
       {"train_mean", r.train_mean}};
}
inline void from_json(const nlohmann::json& j, RunRecord& r) {
  r.config = j.at("config");
  j.at("stages").get_to(r.stages);
  j.at("folds").get_to(r.folds);
  j.at("test").get_to(r.test);
  j.at("test_mae").get_to(r.test_mae);
  j.at("baseline_mae").get_to(r.baseline_mae);
  j.at("train_mean").get_to(r.train_mean);
}

inline RunRecord parse_run_record(const nlohmann::json& j) {
  try {
    return j.get<RunRecord>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("run record: ") + e.what());
  }
}

// Throws LeakageError if any test record is also a train or validation record
// of some fold.
inline void check_no_leakage(const Manifest& m) {
  std::set<std::string> test;
  for (const auto& r : m.records)
    if (r.split == Split::kTest) test.insert(r.id);
  for (const auto& r : m.records) {
    if (r.split == Split::kTest && r.fold)
      throw LeakageError("leakage: test record '" + r.id + "' carries fold label " + std::to_string(*r.fold));
    if (r.fold && test.count(r.id)) throw LeakageError("leakage: test id '" + r.id + "' is used in fold " + std::to_string(*r.fold));
  }
}

// Reads every record's image and resizes it to size x size RGB.
inline std::vector<fg::Image> load_images(const Manifest& m, std::size_t size) {
  std::vector<fg::Image> out;
  out.reserve(m.size());
  for (const auto& r : m.records) {
    fg::Image img = fg::to_rgb(fg::read_image(m.resolve(r.image)));
    out.push_back(img.height == size && img.width == size ? std::move(img) : fg::resize(img, size, size));
  }
  return out;
}

namespace detail {

inline nc::Tensor batch_tensor(const std::vector<fg::Image>& images, const std::vector<std::size_t>& idx, std::size_t a,
                               std::size_t b) {
  std::vector<const fg::Image*> p;
  for (std::size_t k = a; k < b; ++k) p.push_back(&images[idx[k]]);
  return fg::images_to_tensor(p);
}

struct Snapshot {
  std::vector<std::vector<double>> values;
};

inline Snapshot snapshot(const nc::StateList& s) {
  Snapshot out;
  for (const auto& e : s) out.values.emplace_back(e.tensor.values());
  return out;
}

inline void restore(const nc::StateList& s, const Snapshot& snap) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto d = s[i].tensor.mutable_data();
    std::copy(snap.values[i].begin(), snap.values[i].end(), d.begin());
  }
}

}  // namespace detail

// Replaces every BatchNorm running mean and variance with the average batch
// statistics over the first `count` listed images.
inline void recalibrate_batch_norm(ah::AgeModel& model, const std::vector<fg::Image>& images,
                                   const std::vector<std::size_t>& idx, std::size_t count, std::size_t batch) {
  count = std::min(count, idx.size());
  if (count == 0) return;
  nc::NoGradGuard ng;
  auto bns = model.features.batch_norms();
  std::vector<double> saved;
  for (auto* bn : bns) saved.push_back(bn->momentum);
  std::size_t k = 0;
  for (std::size_t a = 0; a < count; a += batch, ++k) {
    for (auto* bn : bns) bn->momentum = 1.0 / static_cast<double>(k + 1);
    model.features(detail::batch_tensor(images, idx, a, std::min(count, a + batch)), true);
  }
  for (std::size_t i = 0; i < bns.size(); ++i) bns[i]->momentum = saved[i];
}

// Eval-mode predictions for the listed images.
inline ah::AgePredictions predict_images(const ah::AgeModel& model, const std::vector<fg::Image>& images,
                                         const std::vector<std::size_t>& idx, std::size_t batch) {
  nc::NoGradGuard ng;
  ah::AgePredictions out;
  for (std::size_t a = 0; a < idx.size(); a += batch) {
    const auto p = ah::predictions_of(model.eval(detail::batch_tensor(images, idx, a, std::min(idx.size(), a + batch))), model.binning);
    out.regression.insert(out.regression.end(), p.regression.begin(), p.regression.end());
    out.expectation.insert(out.expectation.end(), p.expectation.begin(), p.expectation.end());
  }
  return out;
}

inline std::vector<double> select(const ah::AgePredictions& p, const ah::Predictor& pr) {
  std::vector<double> out(p.regression.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (pr.mode) {
      case ah::PredictMode::kRegression: out[i] = p.regression[i]; break;
      case ah::PredictMode::kExpectation: out[i] = p.expectation[i]; break;
      case ah::PredictMode::kBlend: out[i] = pr.lambda * p.regression[i] + (1.0 - pr.lambda) * p.expectation[i]; break;
    }
  }
  return out;
}

// Mean over models of each prediction head, then the blend of those means.
inline std::vector<TestPrediction> ensemble_predict(const std::vector<ah::AgeModel>& models, const Manifest& m,
                                                    const std::vector<fg::Image>& images,
                                                    const std::vector<std::size_t>& idx, double lambda,
                                                    std::size_t batch) {
  if (models.empty()) throw ValidationError("ensemble_predict: no models");
  std::vector<TestPrediction> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = {m.records[idx[i]].id, m.records[idx[i]].age, 0, 0, 0};
  for (const auto& model : models) {
    const auto p = predict_images(model, images, idx, batch);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      out[i].regression += p.regression[i];
      out[i].expectation += p.expectation[i];
    }
  }
  const double k = static_cast<double>(models.size());
  for (auto& p : out) {
    p.regression /= k;
    p.expectation /= k;
    p.blend = lambda * p.regression + (1.0 - lambda) * p.expectation;
  }
  return out;
}

inline std::map<std::string, double> mode_maes(const std::vector<TestPrediction>& p) {
  std::vector<double> t, r, e, b;
  for (const auto& x : p) t.push_back(x.truth), r.push_back(x.regression), e.push_back(x.expectation), b.push_back(x.blend);
  return {{"regression", ev::mae(r, t)}, {"expectation", ev::mae(e, t)}, {"blend", ev::mae(b, t)}};
}

struct TrainResult {
  RunRecord record;
  std::vector<ah::AgeModel> models;  // best-validation model per fold
};

using EpochProgress = std::function<void(int fold, const EpochLog&)>;

// K-fold training inside the train split; `images[i]` belongs to record i and
// must already be at the backbone's input size. Checkpoints go to
// out_dir/fold<k>.ckpt when out_dir is non-empty.
inline TrainResult train_age(Manifest m, const std::vector<fg::Image>& images, const TrainConfig& cfg,
                             const std::string& out_dir = "", const EpochProgress& progress = {}) {
  cfg.validate();
  validate(m);
  const an::BackboneConfig bb = cfg.backbone();
  const ah::AgeBinning bins = cfg.bins();
  if (images.size() != m.size()) throw ValidationError("train_age: one image per manifest record required");
  for (const auto& img : images)
    if (img.height != bb.image_size || img.width != bb.image_size || img.channels != 3)
      throw ShapeError("train_age: images must be " + std::to_string(bb.image_size) + "x" + std::to_string(bb.image_size) + " RGB");
  check_ages(m, bins);

  TrainResult res;
  RunRecord& rec = res.record;
  rec.config = cfg;

  const auto train = m.indices(Split::kTrain);
  const auto test = m.indices(Split::kTest);
  if (test.empty()) throw ValidationError("train_age: manifest has no test records");
  if (std::none_of(train.begin(), train.end(), [&](std::size_t i) { return m.records[i].fold.has_value(); })) {
    assign_folds(m, cfg.folds, cfg.seed);
    rec.stages.push_back({"kfold", {{"assigned", true}, {"k", cfg.folds}, {"train", train.size()}}});
  } else {
    rec.stages.push_back({"kfold", {{"assigned", false}, {"k", cfg.folds}, {"train", train.size()}}});
  }
  for (auto i : train)
    if (!m.records[i].fold || *m.records[i].fold >= static_cast<int>(cfg.folds))
      throw ValidationError("train_age: train record '" + m.records[i].id + "' lacks a fold label below K");
  check_no_leakage(m);
  rec.stages.push_back({"leakage_check", {{"test", test.size()}, {"passed", true}}});

  double mean = 0.0;
  for (auto i : train) mean += m.records[i].age;
  rec.train_mean = mean / static_cast<double>(train.size());
  {
    std::vector<double> t, base;
    for (auto i : test) t.push_back(m.records[i].age), base.push_back(rec.train_mean);
    rec.baseline_mae = ev::mae(base, t);
  }

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  const Rng root(cfg.seed);
  const ah::Predictor pred = cfg.predictor();

  for (std::size_t f = 0; f < cfg.folds; ++f) {
    std::vector<std::size_t> tr, va;
    for (auto i : train) (*m.records[i].fold == static_cast<int>(f) ? va : tr).push_back(i);
    if (tr.empty() || va.empty()) throw ValidationError("train_age: fold " + std::to_string(f) + " is empty");

    FoldLog log;
    log.fold = static_cast<int>(f);
    log.train_size = tr.size();
    log.val_size = va.size();

    Rng init = root.fork(100 + f), rng = root.fork(200 + f);
    ah::AgeModel model(bb, bins, init);
    double fold_mean = 0.0, fold_var = 0.0;
    for (auto i : tr) fold_mean += m.records[i].age;
    fold_mean /= static_cast<double>(tr.size());
    for (auto i : tr) fold_var += (m.records[i].age - fold_mean) * (m.records[i].age - fold_mean);
    model.set_age_units(fold_mean, std::max(1.0, std::sqrt(fold_var / static_cast<double>(tr.size()))));

    nc::StateList state;
    model.collect(state, "");
    nc::Adam opt = nc::make_adamw(nc::trainable(state), cfg.lr, cfg.weight_decay);
    nc::ReduceLrOnPlateau sched(cfg.plateau_factor, cfg.plateau_patience, cfg.plateau_threshold);
    detail::Snapshot best = detail::snapshot(state);
    log.best_val_mae = std::numeric_limits<double>::infinity();

    std::vector<double> val_truth;
    for (auto i : va) val_truth.push_back(m.records[i].age);

    for (std::size_t ep = 1; ep <= cfg.epochs; ++ep) {
      EpochLog e;
      e.epoch = ep;
      e.lr = opt.lr();
      rng.shuffle(tr);
      double n = 0.0;
      for (std::size_t a = 0; a < tr.size(); a += cfg.batch_size) {
        const std::size_t b = std::min(tr.size(), a + cfg.batch_size);
        std::vector<double> ages;
        for (std::size_t k = a; k < b; ++k) ages.push_back(m.records[tr[k]].age);
        opt.zero_grad();
        const auto loss = ah::combined_loss(model(detail::batch_tensor(images, tr, a, b), true, rng), ages, cfg.weights, bins);
        loss.total.backward();
        opt.step();
        const double w = static_cast<double>(b - a);
        e.train_loss += loss.total.item() * w;
        e.train_huber += loss.huber.item() * w;
        e.train_kl += loss.kl.item() * w;
        n += w;
      }
      e.train_loss /= n;
      e.train_huber /= n;
      e.train_kl /= n;
      recalibrate_batch_norm(model, images, tr, cfg.bn_recalibration, cfg.batch_size);

      {
        nc::NoGradGuard ng;
        ah::AgePredictions p;
        for (std::size_t a = 0; a < va.size(); a += cfg.batch_size) {
          const std::size_t b = std::min(va.size(), a + cfg.batch_size);
          std::vector<double> ages(val_truth.begin() + static_cast<long>(a), val_truth.begin() + static_cast<long>(b));
          const auto out = model.eval(detail::batch_tensor(images, va, a, b));
          e.val_loss += ah::combined_loss(out, ages, cfg.weights, bins).total.item() * static_cast<double>(b - a);
          const auto q = ah::predictions_of(out, bins);
          p.regression.insert(p.regression.end(), q.regression.begin(), q.regression.end());
          p.expectation.insert(p.expectation.end(), q.expectation.begin(), q.expectation.end());
        }
        e.val_loss /= static_cast<double>(va.size());
        e.val_mae = ev::mae(select(p, pred), val_truth);
      }
      if (e.val_mae < log.best_val_mae) {
        log.best_val_mae = e.val_mae;
        log.best_epoch = ep;
        best = detail::snapshot(state);
      }
      if (sched.step(e.val_mae, opt)) ++log.lr_reductions;
      log.epochs.push_back(e);
      if (progress) progress(log.fold, e);
    }

    detail::restore(state, best);
    if (!out_dir.empty()) {
      log.checkpoint = "fold" + std::to_string(f) + ".ckpt";
      ah::save_age_model((std::filesystem::path(out_dir) / log.checkpoint).string(), model,
                         {{"fold", f}, {"best_epoch", log.best_epoch}, {"best_val_mae", log.best_val_mae}, {"lambda", cfg.blend_lambda}});
    }
    rec.folds.push_back(std::move(log));
    res.models.push_back(std::move(model));
  }

  rec.test = ensemble_predict(res.models, m, images, test, cfg.blend_lambda, cfg.batch_size);
  rec.test_mae = mode_maes(rec.test);
  rec.stages.push_back({"test", {{"samples", test.size()}, {"models", res.models.size()}}});
  return res;
}

}  // namespace occage::pl
