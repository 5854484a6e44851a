#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "occage/agehead/model.hpp"
#include "occage/agenet/agenet.hpp"
#include "occage/inpaint/attention.hpp"
#include "occage/inpaint/networks.hpp"
#include "occage/numcore/gradcheck.hpp"

namespace occage::pl {

struct GradResult {
  std::string name;
  double tolerance = 0.0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::size_t failures = 0;
  double seconds = 0.0;
  bool passed() const { return failures == 0 && checked > 0; }
};

inline void to_json(nlohmann::json& j, const GradResult& r) {
  j = {{"name", r.name},         {"tolerance", r.tolerance}, {"max_rel_error", r.max_rel_error},
       {"max_abs_error", r.max_abs_error}, {"checked", r.checked}, {"failures", r.failures},
       {"seconds", r.seconds},   {"passed", r.passed()}};
}

namespace gs {

using nc::Tensor;

inline Tensor randn(const nc::Shape& shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(nc::numel(shape));
  for (auto& x : v) x = rng.normal() * scale;
  return Tensor(shape, std::move(v), true);
}

// Fixed random weights so the scalar root depends on every output element.
inline Tensor project(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(y.numel());
  for (auto& v : w) v = rng.uniform(-1, 1);
  return nc::sum(nc::mul(y, Tensor(y.shape(), std::move(w))));
}

inline std::vector<Tensor> with_trainable(std::vector<Tensor> in, const nc::StateList& s) {
  for (const auto& e : s)
    if (e.trainable) in.push_back(e.tensor);
  return in;
}

struct Case {
  std::string name;
  double tolerance;
  std::size_t per_input;  // 0 = every element
  std::function<Tensor()> f;
  std::vector<Tensor> inputs;
};

// Values kept clear of kinks (relu, abs, Huber, hinge) so central
// differences do not straddle a nondifferentiable point.
inline std::vector<Case> cases() {
  using namespace nc;
  std::vector<Case> c;
  Rng rng(2024);
  auto add_case = [&](std::string name, std::function<Tensor()> f, std::vector<Tensor> in, double tol = 1e-4,
                      std::size_t per = 0) { c.push_back({std::move(name), tol, per, std::move(f), std::move(in)}); };

  const Tensor a = randn({3, 4}, rng), b = randn({3, 4}, rng);
  const Tensor pos({5}, {0.5, 1.0, 1.5, 2.0, 3.0}, true);
  const Tensor kinked({6}, {-1.3, -0.4, 0.2, 0.9, 1.7, -2.2}, true);
  add_case("add", [=] { return project(add(a, b), 1); }, {a, b});
  add_case("sub", [=] { return project(sub(a, b), 2); }, {a, b});
  add_case("mul", [=] { return project(mul(a, b), 3); }, {a, b});
  add_case("add_scalar", [=] { return project(add_scalar(a, 0.3), 4); }, {a});
  add_case("mul_scalar", [=] { return project(mul_scalar(a, -2.0), 5); }, {a});
  add_case("neg", [=] { return project(neg(a), 6); }, {a});
  add_case("mul_const", [=] { return project(mul_const(a, {0.5, -1.5, 2.0, 0.0}), 7); }, {a});
  add_case("relu", [=] { return project(relu(kinked), 8); }, {kinked});
  add_case("leaky_relu", [=] { return project(leaky_relu(kinked, 0.2), 9); }, {kinked});
  add_case("abs", [=] { return project(nc::abs(kinked), 10); }, {kinked});
  add_case("sigmoid", [=] { return project(sigmoid(a), 11); }, {a});
  add_case("silu", [=] { return project(silu(a), 12); }, {a});
  add_case("tanh", [=] { return project(nc::tanh(a), 13); }, {a});
  add_case("gelu", [=] { return project(gelu(a), 14); }, {a});
  add_case("exp", [=] { return project(nc::exp(a), 15); }, {a});
  add_case("log", [=] { return project(nc::log(pos), 16); }, {pos});
  add_case("square", [=] { return project(square(a), 17); }, {a});
  add_case("sum", [=] { return sum(square(a)); }, {a});
  add_case("mean", [=] { return mean(square(a)); }, {a});

  const Tensor t3 = randn({2, 3, 4}, rng), u3 = randn({2, 2, 4}, rng), row = randn({3, 4}, rng);
  add_case("add_trailing", [=] { return project(add_trailing(t3, row), 20); }, {t3, row});
  add_case("reshape", [=] { return project(reshape(t3, {6, 4}), 21); }, {t3});
  add_case("permute", [=] { return project(permute(t3, {1, 2, 0}), 22); }, {t3});
  add_case("transpose_last2", [=] { return project(transpose_last2(t3), 23); }, {t3});
  add_case("concat", [=] { return project(concat({t3, u3}, 1), 24); }, {t3, u3});
  add_case("slice", [=] { return project(slice(t3, 2, 1, 2), 25); }, {t3});
  add_case("gather", [=] { return project(gather(t3, {0, 5, -1, 5, 23, 7}, {6}), 26); }, {t3});
  add_case("scatter_add", [=] { return project(scatter_add(slice(t3, 0, 0, 1), {2, 0, 2, 3, 1, 1, 0, 3, 2, 2, 1, 0}, {4}), 27); },
           {t3});

  const Tensor ma = randn({2, 3, 4}, rng), mb = randn({2, 4, 5}, rng), mbt = randn({2, 5, 4}, rng);
  const Tensor lw = randn({6, 4}, rng), lb = randn({6}, rng);
  add_case("matmul", [=] { return project(matmul(ma, mb), 30); }, {ma, mb});
  add_case("matmul_transposed", [=] { return project(matmul(ma, mbt, true), 31); }, {ma, mbt});
  add_case("linear", [=] { return project(linear(ma, lw, lb), 32); }, {ma, lw, lb});

  const Tensor sm = randn({3, 5}, rng);
  add_case("softmax", [=] { return project(softmax(sm, 1), 33); }, {sm});
  add_case("log_softmax", [=] { return project(log_softmax(sm, 1), 34); }, {sm});
  add_case("normalize_rows", [=] { return project(normalize_rows(sm), 35); }, {sm});
  const Tensor lg = randn({5}, rng), lbeta = randn({5}, rng);
  add_case("layer_norm", [=] { return project(layer_norm(sm, lg, lbeta), 36); }, {sm, lg, lbeta});

  const Tensor bx = randn({3, 2, 2, 2}, rng), bg = randn({2}, rng), bb = randn({2}, rng);
  add_case("batch_norm_train",
           [=] {
             Tensor rm = Tensor::zeros({2}), rv = Tensor::full({2}, 1.0);
             return project(batch_norm(bx, bg, bb, rm, rv, true), 37);
           },
           {bx, bg, bb});
  const Tensor rm2({2}, {0.1, -0.2}), rv2({2}, {0.5, 2.0});
  add_case("batch_norm_eval", [=] { return project(batch_norm(bx, bg, bb, rm2, rv2, false), 38); }, {bx, bg, bb});

  const Tensor cx = randn({2, 2, 5, 5}, rng), cw = randn({3, 2, 3, 3}, rng), cb = randn({3}, rng);
  add_case("conv2d_stride2", [=] { return project(conv2d(cx, cw, cb, 2, 1), 40); }, {cx, cw, cb});
  add_case("conv2d_valid", [=] { return project(conv2d(cx, cw, cb, 1, 0), 41); }, {cx, cw, cb});
  const Tensor ux = randn({1, 2, 3, 4}, rng);
  add_case("bilinear_upsample", [=] { return project(bilinear_upsample(ux, 5, 7), 42); }, {ux});
  add_case("global_avg_pool", [=] { return project(global_avg_pool(ux), 43); }, {ux});
  add_case("dropout",
           [=] {
             Rng d(5);
             return project(dropout(a, 0.3, true, d), 44);
           },
           {a});
  const Tensor hp({4}, {0.3, -2.5, 1.7, 0.05}, true);
  add_case("huber_loss", [=] { return huber_loss(hp, {0.0, 0.0, 0.0, 0.5}, 1.0); }, {hp});

  const Tensor sw = randn({3, 4}, rng);
  {
    auto st = std::make_shared<PowerIterationState>(3, 4, rng);
    NoGradGuard g;
    spectral_normalize(sw, *st, 30);
    // Zero iterations keep u and v fixed between evaluations.
    add_case("spectral_normalize", [=] { return project(spectral_normalize(sw, *st, 0), 45); }, {sw});
  }

  // Inpainting blocks.
  auto gated = std::make_shared<ip::GatedConv>(2, 3, 3, 2, rng);
  for (auto& v : gated->feature.bias.mutable_data()) v = rng.normal() * 0.1;
  const Tensor gx = randn({1, 2, 5, 5}, rng);
  add_case("gated_conv", [=] { return project((*gated)(gx), 50); },
           {gx, gated->feature.weight, gated->gate.weight, gated->feature.bias, gated->gate.bias});
  const Tensor fa = randn({1, 2, 5, 5}, rng);
  std::vector<double> hole(25, 0.0);
  for (std::size_t p : {6u, 7u, 11u, 12u}) hole[p] = 1.0;
  const Tensor hm({1, 1, 5, 5}, hole);
  add_case("contextual_attention", [=] { return project(ip::contextual_attention(fa, hm), 51); }, {fa});
  std::vector<double> rv(12), fv(12);
  for (auto& v : rv) v = (rng.bernoulli(0.5) ? 1.3 : 0.7) + rng.uniform(-0.2, 0.2);
  for (auto& v : fv) v = (rng.bernoulli(0.5) ? -1.3 : -0.7) + rng.uniform(-0.2, 0.2);
  const Tensor real({1, 2, 2, 3}, rv, true), fake({1, 2, 2, 3}, fv, true);
  add_case("hinge_discriminator", [=] { return ip::hinge_losses(real, fake).discriminator; }, {real, fake});
  add_case("hinge_generator", [=] { return ip::hinge_losses(real, fake).generator; }, {fake});

  // Age network blocks.
  {
    auto pe = std::make_shared<an::PatchEmbed>(2, 4, rng);
    const Tensor img = randn({1, 3, 4, 4}, rng, false);
    nc::StateList s;
    pe->collect(s, "");
    add_case("patch_embed", [=] { return project((*pe)(img), 60); }, with_trainable({}, s));
  }
  {
    auto wa = std::make_shared<an::WindowAttention>(8, 2, 2, rng);
    for (Tensor t : {wa->qkv.weight, wa->qkv.bias, wa->proj.bias, wa->bias_table})
      for (auto& v : t.mutable_data()) v = rng.normal() * 0.5;
    const Tensor x = randn({1, 4, 4, 8}, rng);
    nc::StateList s;
    wa->collect(s, "");
    add_case("window_attention_shifted", [=] { return project((*wa)(x, 1), 61); }, with_trainable({x}, s), 1e-4, 12);
  }
  {
    auto blk = std::make_shared<an::SwinBlock>(8, 2, 2, 1, 2, rng);
    for (Tensor t : {blk->attn.qkv.weight, blk->attn.qkv.bias, blk->attn.proj.bias, blk->attn.bias_table})
      for (auto& v : t.mutable_data()) v = rng.normal() * 0.5;
    const Tensor x = randn({1, 4, 4, 8}, rng);
    nc::StateList s;
    blk->collect(s, "");
    add_case("swin_block", [=] { return project((*blk)(x), 62); }, with_trainable({x}, s), 1e-4, 12);
  }
  {
    auto pm = std::make_shared<an::PatchMerge>(2, rng);
    for (auto& v : pm->norm.gamma.mutable_data()) v = rng.uniform(0.5, 1.5);
    const Tensor x = randn({1, 4, 4, 2}, rng);
    nc::StateList s;
    pm->collect(s, "");
    add_case("patch_merge", [=] { return project((*pm)(x), 63); }, with_trainable({x}, s));
  }
  {
    auto arcm = std::make_shared<an::ArcmBlock>(8, rng);
    const Tensor x = randn({2, 8, 4, 4}, rng);
    nc::StateList s;
    arcm->collect(s, "");
    add_case("arcm", [=] { return project((*arcm)(x, true), 64); }, with_trainable({x}, s), 1e-4, 10);
  }
  {
    an::BackboneConfig bc;
    bc.embed_dim = 2;
    bc.fusion_dim = 3;
    Rng local(2);
    auto fu = std::make_shared<an::Fusion>(bc, local);
    std::array<Tensor, an::kStages> ys;
    std::vector<Tensor> in;
    for (std::size_t st = 0; st < an::kStages; ++st) {
      const std::size_t side = 4u >> std::min<std::size_t>(st, 2);
      ys[st] = randn({2, bc.channels(st), side, side}, local);
      in.push_back(ys[st]);
    }
    nc::StateList s;
    fu->collect(s, "");
    add_case("fusion", [=] { return project((*fu)(ys, true), 65); }, with_trainable(in, s), 1e-4, 10);
  }

  // Age head and its losses.
  {
    const ah::AgeBinning bins{10, 10};
    auto head = std::make_shared<ah::MtaHead>(8, bins, rng);
    head->regress.bias.mutable_data()[0] = 14.0;
    const Tensor f = randn({3, 8}, rng);
    const std::vector<double> ages{12.5, 19.0, 15.2};
    nc::StateList s;
    head->collect(s, "");
    add_case("head_combined_loss",
             [=] {
               Rng d(0);
               return ah::combined_loss((*head)(f, false, d), ages, {}, bins).total;
             },
             with_trainable({f}, s));
    const Tensor logits = randn({3, 10}, rng);
    std::vector<std::vector<double>> targets;
    for (double age : ages) targets.push_back(ah::target_distribution(age, bins, 2.0));
    add_case("kl_loss", [=] { return ah::kl_loss(targets, log_softmax(logits, 1)); }, {logits});
  }

  // Whole age model, image to combined loss, on sampled parameters.
  {
    an::BackboneConfig bc;
    bc.image_size = 32;
    bc.window = 2;
    bc.embed_dim = 8;
    bc.heads = {1, 2, 2};
    bc.fusion_dim = 8;
    const ah::AgeBinning bins{0, 10};
    auto model = std::make_shared<ah::AgeModel>(bc, bins, rng);
    model->set_regression_bias(5.0);
    std::vector<double> pix(2 * 3 * 32 * 32);
    for (auto& v : pix) v = rng.normal();
    const Tensor img({2, 3, 32, 32}, std::move(pix));
    const std::vector<double> ages{3.0, 7.5};
    nc::StateList s;
    model->collect(s, "");
    const auto all = with_trainable({}, s);
    Rng pick(8);
    std::vector<std::size_t> chosen;
    for (int i = 0; i < 20; ++i) chosen.push_back(pick.below(all.size()));
    std::sort(chosen.begin(), chosen.end());
    chosen.erase(std::unique(chosen.begin(), chosen.end()), chosen.end());
    std::vector<Tensor> in;
    for (auto k : chosen) in.push_back(all[k]);
    add_case("age_model_full_graph", [=] { return ah::combined_loss(model->eval(img), ages, {}, bins).total; }, in, 1e-3, 2);
  }
  return c;
}

}  // namespace gs

inline std::vector<std::string> gradient_case_names() {
  std::vector<std::string> out;
  for (const auto& c : gs::cases()) out.push_back(c.name);
  return out;
}

// Runs every case whose name contains `filter` (all when empty).
inline std::vector<GradResult> run_gradient_suite(const std::string& filter = "",
                                                  const std::function<void(const GradResult&)>& progress = {}) {
  std::vector<GradResult> out;
  for (const auto& c : gs::cases()) {
    if (!filter.empty() && c.name.find(filter) == std::string::npos) continue;
    nc::GradcheckOptions o;
    o.rel_tol = c.tolerance;
    o.abs_tol = 1e-8;
    o.max_per_input = c.per_input;
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = nc::gradcheck(c.f, c.inputs, o);
    GradResult r{c.name, c.tolerance, rep.max_rel_error, rep.max_abs_error, rep.checked, rep.failures,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    if (progress) progress(r);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace occage::pl
