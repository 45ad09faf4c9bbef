// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "doctest.h"
#include "dsal/data.hpp"
#include "dsal/errors.hpp"
#include "dsal/rng.hpp"
#include "dsal/segnet.hpp"

namespace fs = std::filesystem;
using namespace dsal;

namespace {

DatasetSplits tiny_data(int n_train, int res = 16, uint64_t seed = 1) {
  DatasetConfig dc;
  dc.height = res;
  dc.width = res;
  dc.n_train = n_train;
  dc.n_val = 1;
  dc.n_test = 1;
  dc.seed = seed;
  return make_dataset(dc);
}

ModelConfig tiny_model_cfg(int res = 16) {
  ModelConfig mc;
  mc.depth = 2;
  mc.base_channels = 4;
  mc.input_h = res;
  mc.input_w = res;
  mc.seed = 5;
  return mc;
}

std::vector<const Sample*> ptrs_of(const std::vector<Sample>& v) {
  std::vector<const Sample*> p;
  for (const Sample& s : v) p.push_back(&s);
  return p;
}

bool params_equal(const Model& a, const Model& b) {
  const auto pa = a.param_list(), pb = b.param_list();
  if (pa.size() != pb.size()) return false;
  for (size_t i = 0; i < pa.size(); ++i)
    if (pa[i]->values != pb[i]->values) return false;
  return true;
}

}  // namespace

TEST_CASE("forward yields three normalized full-resolution maps") {
  ModelConfig mc;  // depth 3, base 8, 64x64
  mc.seed = 11;
  const Model model = build_model(mc);
  DatasetSplits d = tiny_data(2, 64);
  const Tensor<float> images = stack_images(ptrs_of(d.train));
  const PredictionSet preds = forward(model, images);

  for (const Tensor<float>* p : {&preds.p_l, &preds.p_m, &preds.p_f}) {
    CHECK(p->shape == Shape{2, 2, 64, 64});
    CHECK(all_finite(*p));
    for (float v : p->values) {
      CHECK(v > 0.0f);
      CHECK(v < 1.0f);
    }
    for (int n = 0; n < 2; ++n)
      for (int y = 0; y < 64; y += 17)
        for (int x = 0; x < 64; x += 13)
          CHECK(p->at4(n, 0, y, x) + p->at4(n, 1, y, x) ==
                doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("model init is seed-deterministic") {
  ModelConfig mc = tiny_model_cfg();
  const Model a = build_model(mc);
  const Model b = build_model(mc);
  CHECK(params_equal(a, b));

  mc.seed += 1;
  const Model c = build_model(mc);
  CHECK_FALSE(params_equal(a, c));

  // Bias tensors start at zero; weights carry the seeded init.
  CHECK(a.head_f.b.values == std::vector<float>(2, 0.0f));
  bool any_nonzero = false;
  for (float v : a.enc[0].w.values) any_nonzero |= (v != 0.0f);
  CHECK(any_nonzero);
}

TEST_CASE("invalid model configs are rejected") {
  ModelConfig mc;
  mc.input_h = 60;
  mc.input_w = 60;  // not divisible by 2^3
  CHECK_THROWS_AS(build_model(mc), ConfigError);

  mc = ModelConfig{};
  mc.aux_stage_lower = 1;
  mc.aux_stage_middle = 1;
  CHECK_THROWS_AS(build_model(mc), ConfigError);

  mc = ModelConfig{};
  mc.aux_stage_middle = 3;  // depth 3 has decoder stages 0..2
  CHECK_THROWS_AS(build_model(mc), ConfigError);

  mc = ModelConfig{};
  mc.classes = 3;
  CHECK_THROWS_AS(build_model(mc), ConfigError);

  mc = ModelConfig{};
  mc.loss_weights = {0.0f, 0.0f, 0.0f};
  CHECK_THROWS_AS(build_model(mc), ConfigError);

  mc = ModelConfig{};
  mc.depth = 1;
  CHECK_THROWS_AS(build_model(mc), ConfigError);
}

TEST_CASE("loss frozen values") {
  // Probability 1 on every target pixel -> loss 0; uniform -> ln 2.
  PredictionSet preds;
  for (Tensor<float>* p : {&preds.p_l, &preds.p_m, &preds.p_f}) {
    *p = Tensor<float>({1, 2, 2, 2});
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) p->at4(0, 1, y, x) = 1.0f;
  }
  Tensor<uint8_t> targets({1, 2, 2}, 1);
  const LossWeights w;
  const LossValue sure = loss(preds, targets, w);
  CHECK(sure.l_f == 0.0f);
  CHECK(sure.total == 0.0f);

  for (Tensor<float>* p : {&preds.p_l, &preds.p_m, &preds.p_f})
    std::fill(p->values.begin(), p->values.end(), 0.5f);
  const LossValue uni = loss(preds, targets, w);
  const float ln2 = std::log(2.0f);
  CHECK(uni.l_l == doctest::Approx(ln2).epsilon(1e-6));
  CHECK(uni.l_m == doctest::Approx(ln2).epsilon(1e-6));
  CHECK(uni.l_f == doctest::Approx(ln2).epsilon(1e-6));
  // Default weights sum to 1, so the weighted total equals the common value.
  CHECK(uni.total == doctest::Approx(ln2).epsilon(1e-6));
}

TEST_CASE("total loss is the pinned left-to-right combination") {
  auto rng = make_rng(17);
  std::uniform_real_distribution<float> u(0.05f, 0.95f);
  PredictionSet preds;
  for (Tensor<float>* p : {&preds.p_l, &preds.p_m, &preds.p_f}) {
    *p = Tensor<float>({2, 2, 4, 4});
    for (int n = 0; n < 2; ++n)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
          const float q = u(rng);
          p->at4(n, 0, y, x) = q;
          p->at4(n, 1, y, x) = 1.0f - q;
        }
  }
  Tensor<uint8_t> targets({2, 4, 4});
  for (auto& t : targets.values) t = (u(rng) > 0.5f) ? 1 : 0;

  LossWeights w;
  w.alpha_l = 0.7f;
  w.alpha_m = 0.2f;
  w.alpha_f = 1.3f;
  const LossValue v = loss(preds, targets, w);
  CHECK(v.total == (w.alpha_l * v.l_l + w.alpha_m * v.l_m) + w.alpha_f * v.l_f);
}

TEST_CASE("loss() agrees with the tape loss nodes") {
  const ModelConfig mc = tiny_model_cfg();
  const Model model = build_model(mc);
  DatasetSplits d = tiny_data(3);
  const Tensor<float> images = stack_images(ptrs_of(d.train));
  const Tensor<uint8_t> targets = stack_masks(ptrs_of(d.train));

  GraphT<float> g = build_forward(model, images);
  LossNodes ln = attach_loss(g, targets, mc.loss_weights);
  const PredictionSet preds = forward(model, images);
  const LossValue v = loss(preds, targets, mc.loss_weights);
  CHECK(v.total == doctest::Approx(g.tape.val(ln.total).values[0]).epsilon(1e-6));
  CHECK(v.l_l == doctest::Approx(g.tape.val(ln.l_l).values[0]).epsilon(1e-6));
  CHECK(v.l_f == doctest::Approx(g.tape.val(ln.l_f).values[0]).epsilon(1e-6));
}

TEST_CASE("train_step overfits one fixed 4-sample batch") {
  DatasetConfig dc;
  dc.n_train = 4;
  dc.n_val = 1;
  dc.n_test = 1;
  DatasetSplits d = make_dataset(dc);
  const Tensor<float> images = stack_images(ptrs_of(d.train));
  const Tensor<uint8_t> targets = stack_masks(ptrs_of(d.train));

  ModelConfig mc;
  mc.seed = 7;
  Model model = build_model(mc);
  AdamState opt = init_adam(model);
  float prev = std::numeric_limits<float>::infinity();
  for (int step = 0; step < 20; ++step) {
    const float l = train_step(model, images, targets, opt);
    CHECK(l < prev);
    prev = l;
  }
}

TEST_CASE("alpha (0,0,1) reduces to a single-head network") {
  const ModelConfig mc = tiny_model_cfg();
  const Model model = build_model(mc);
  DatasetSplits d = tiny_data(2);
  const Tensor<float> images = stack_images(ptrs_of(d.train));
  const Tensor<uint8_t> targets = stack_masks(ptrs_of(d.train));

  LossWeights only_final;
  only_final.alpha_l = 0.0f;
  only_final.alpha_m = 0.0f;
  only_final.alpha_f = 1.0f;

  GraphT<float> g1 = build_forward(model, images);
  const LossNodes ln = attach_loss(g1, targets, only_final);
  g1.tape.backward(ln.total);

  // A plain single-head graph: loss directly on the final head.
  GraphT<float> g2 = build_forward(model, images);
  const int nll = g2.tape.nll_mean(g2.p_f, targets);
  g2.tape.backward(nll);

  // Identical loss value and bitwise identical gradients everywhere.
  CHECK(g1.tape.val(ln.total).values[0] == g2.tape.val(nll).values[0]);
  REQUIRE(g1.param_ids.size() == g2.param_ids.size());
  for (size_t i = 0; i < g1.param_ids.size(); ++i)
    CHECK(g1.tape.grad(g1.param_ids[i]) == g2.tape.grad(g2.param_ids[i]));

  // Aux head parameters see exactly zero gradient...
  const size_t n = g1.param_ids.size();
  for (size_t i = n - 6; i < n - 2; ++i)
    for (float gv : g1.tape.grad(g1.param_ids[i])) CHECK(gv == 0.0f);

  // ...so a fresh-state Adam step leaves them bitwise untouched.
  Model m2 = model;
  AdamState opt = init_adam(m2);
  {
    Model probe = m2;
    // Swap the weights onto the model copy used for the step.
    probe.config.loss_weights = only_final;
    AdamState o2 = init_adam(probe);
    train_step(probe, images, targets, o2);
    CHECK(probe.head_l.w.values == model.head_l.w.values);
    CHECK(probe.head_l.b.values == model.head_l.b.values);
    CHECK(probe.head_m.w.values == model.head_m.w.values);
    CHECK(probe.head_m.b.values == model.head_m.b.values);
    CHECK(probe.head_f.w.values != model.head_f.w.values);
  }
}

TEST_CASE("train_step is deterministic") {
  const ModelConfig mc = tiny_model_cfg();
  DatasetSplits d = tiny_data(3);
  const Tensor<float> images = stack_images(ptrs_of(d.train));
  const Tensor<uint8_t> targets = stack_masks(ptrs_of(d.train));

  Model a = build_model(mc);
  Model b = build_model(mc);
  AdamState oa = init_adam(a), ob = init_adam(b);
  const float la = train_step(a, images, targets, oa);
  const float lb = train_step(b, images, targets, ob);
  CHECK(la == lb);
  CHECK(params_equal(a, b));
  CHECK(oa.t == 1);
}

TEST_CASE("analytic gradients match central differences on a tiny model") {
  ModelConfig tiny;
  tiny.depth = 2;
  tiny.base_channels = 2;
  tiny.input_h = 8;
  tiny.input_w = 8;
  tiny.seed = 3;
  ModelT<double> model = build_model_t<double>(tiny);

  auto rng = make_rng(99);
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor<double> img({2, 1, 8, 8});
  for (auto& v : img.values) v = 0.5 + 0.25 * nd(rng);
  Tensor<uint8_t> tgt({2, 8, 8});
  for (auto& v : tgt.values) v = (nd(rng) > 0) ? 1 : 0;
  const LossWeights w;

  const auto loss_value = [&]() {
    GraphT<double> g = build_forward(model, img);
    LossNodes ln = attach_loss(g, tgt, w);
    return g.tape.val(ln.total).values[0];
  };

  std::vector<std::vector<double>> analytic;
  {
    GraphT<double> g = build_forward(model, img);
    LossNodes ln = attach_loss(g, tgt, w);
    g.tape.backward(ln.total);
    for (int id : g.param_ids) analytic.push_back(g.tape.grad(id));
  }

  const double eps = 1e-5;
  double max_rel = 0.0;
  auto params = model.param_list();
  for (size_t pi = 0; pi < params.size(); ++pi)
    for (size_t j = 0; j < params[pi]->values.size(); ++j) {
      const double orig = params[pi]->values[j];
      params[pi]->values[j] = orig + eps;
      const double fp = loss_value();
      params[pi]->values[j] = orig - eps;
      const double fm = loss_value();
      params[pi]->values[j] = orig;
      const double numeric = (fp - fm) / (2 * eps);
      const double rel = std::fabs(analytic[pi][j] - numeric) /
                         std::max({std::fabs(analytic[pi][j]), std::fabs(numeric), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  CHECK(max_rel < 1e-3);
}

TEST_CASE("forward is batch-independent") {
  const ModelConfig mc = tiny_model_cfg();
  const Model model = build_model(mc);
  DatasetSplits d = tiny_data(2);
  const Tensor<float> batch = stack_images(ptrs_of(d.train));
  const PredictionSet both = forward(model, batch);

  for (int i = 0; i < 2; ++i) {
    const Tensor<float> one = stack_images({&d.train[static_cast<size_t>(i)]});
    const PredictionSet single = forward(model, one);
    const size_t plane = static_cast<size_t>(2) * 16 * 16;
    for (size_t j = 0; j < plane; ++j) {
      CHECK(single.p_f.values[j] == both.p_f.values[static_cast<size_t>(i) * plane + j]);
      CHECK(single.p_l.values[j] == both.p_l.values[static_cast<size_t>(i) * plane + j]);
    }
  }
}

TEST_CASE("predict_mask matches thresholded forward maps") {
  const ModelConfig mc = tiny_model_cfg();
  const Model model = build_model(mc);
  DatasetSplits d = tiny_data(1);
  const Sample& s = d.train[0];
  const MaskTriple t = predict_mask(model, s.image);
  CHECK(t.f.h == 16);
  CHECK(t.f.w == 16);

  const PredictionSet preds = forward(model, stack_images({&s}));
  CHECK(t.l.values == binarize(preds.p_l).values);
  CHECK(t.m.values == binarize(preds.p_m).values);
  CHECK(t.f.values == binarize(preds.p_f).values);
}

TEST_CASE("evaluate averages final-head dice over samples") {
  const ModelConfig mc = tiny_model_cfg();
  const Model model = build_model(mc);
  DatasetSplits d = tiny_data(5);
  const double got = evaluate(model, d.train, 2);

  double expect = 0.0;
  for (const Sample& s : d.train)
    expect += dsc(predict_mask(model, s.image).f, *s.mask);
  expect /= static_cast<double>(d.train.size());
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));
  CHECK_THROWS_AS(evaluate(model, {}, 2), std::invalid_argument);
}

TEST_CASE("stack helpers lay out batches in sample order") {
  DatasetSplits d = tiny_data(3);
  const auto ps = ptrs_of(d.train);
  const Tensor<float> images = stack_images(ps);
  const Tensor<uint8_t> masks = stack_masks(ps);
  CHECK(images.shape == Shape{3, 1, 16, 16});
  CHECK(masks.shape == Shape{3, 16, 16});
  for (int i = 0; i < 3; ++i) {
    const size_t plane = 16 * 16;
    for (size_t j = 0; j < plane; ++j) {
      CHECK(images.values[static_cast<size_t>(i) * plane + j] ==
            d.train[static_cast<size_t>(i)].image.values[j]);
      CHECK(masks.values[static_cast<size_t>(i) * plane + j] ==
            d.train[static_cast<size_t>(i)].mask->values[j]);
    }
  }
}

TEST_CASE("checkpoints round-trip bit-exactly and reject corruption") {
  const fs::path dir = fs::temp_directory_path() / "dsal_test_ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string path = (dir / "model.ckpt").string();

  ModelConfig mc = tiny_model_cfg();
  mc.seed = 21;
  const Model model = build_model(mc);
  save_checkpoint(path, model, 4);

  const Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.round == 4);
  CHECK(loaded.model.config.depth == mc.depth);
  CHECK(loaded.model.config.seed == mc.seed);
  CHECK(params_equal(loaded.model, model));

  // Re-saving the loaded model reproduces the file byte for byte.
  const std::string path2 = (dir / "model2.ckpt").string();
  save_checkpoint(path2, loaded.model, 4);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), {});
  const std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);

  const auto patch = [&](const std::string& name, size_t offset, std::string bytes,
                         bool append = false) {
    const fs::path p = dir / name;
    std::string buf = b1;
    if (append)
      buf += bytes;
    else
      buf.replace(offset, bytes.size(), bytes);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    out.close();
    return p.string();
  };

  CHECK_THROWS_AS(load_checkpoint(patch("magic.ckpt", 0, "XSALCKPT")), DataError);
  // Depth field zeroed: an invalid config echo.
  CHECK_THROWS_AS(load_checkpoint(patch("depth.ckpt", 12, std::string(4, '\x00'))),
                  DataError);
  // NaN patched into the last parameter value.
  CHECK_THROWS_AS(load_checkpoint(patch("nan.ckpt", b1.size() - 4,
                                        std::string("\x00\x00\xc0\x7f", 4))),
                  DataError);
  CHECK_THROWS_AS(load_checkpoint(patch("trail.ckpt", 0, "Z", /*append=*/true)), DataError);
  // Truncation.
  {
    const fs::path p = dir / "trunc.ckpt";
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(b1.data(), static_cast<std::streamsize>(b1.size() / 2));
    out.close();
    CHECK_THROWS_AS(load_checkpoint(p.string()), DataError);
  }
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.ckpt").string()), DataError);
}
