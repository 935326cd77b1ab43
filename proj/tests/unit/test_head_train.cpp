#include <doctest.h>

#include <cmath>

#include "consor/checkpoint.hpp"
#include "consor/grad_check.hpp"
#include "consor/head.hpp"
#include "consor/train.hpp"
#include "support.hpp"

using namespace consor;

namespace {

std::vector<const PairSample*> all_samples(const Dataset& ds) {
  std::vector<const PairSample*> out;
  for (const auto& s : ds.samples) out.push_back(&s);
  return out;
}

ModelConfig small_model() {
  ModelConfig m = ModelConfig::miniature();
  m.msat.width = 24;
  m.msat.heads = 4;
  m.msat.layers = 2;
  m.cir.heads = 4;
  return m;
}

std::vector<Mat> snapshot(const ParamStore& store) {
  std::vector<Mat> out;
  for (const Parameter* p : store.all()) out.push_back(p->value);
  return out;
}

}  // namespace

TEST_CASE("logits: aligned prompt scores 1, orthogonal prompts 0") {
  Eigen::RowVectorXd u(4);
  u << 0.0, 2.0, 0.0, 0.0;
  Mat prompts = Mat::Zero(6, 4);
  prompts(0, 1) = 0.5;
  prompts(1, 0) = 1.0;
  prompts(2, 2) = 3.0;
  prompts(3, 3) = 1.0;
  prompts(4, 0) = -1.0;
  prompts(5, 2) = 1.0;
  Eigen::RowVectorXd z = classify_logits(u, prompts, 1.0);
  REQUIRE(z.size() == 6);
  CHECK(z(0) == doctest::Approx(1.0));
  for (int c = 1; c < 6; ++c) CHECK(z(c) == doctest::Approx(0.0));
  CHECK(classify_logits(u, prompts, 10.0)(0) == doctest::Approx(10.0));
}

TEST_CASE("logits are scale invariant and reject zero vectors") {
  Rng rng(1);
  Eigen::RowVectorXd u = rng.normal_matrix(1, 8);
  Mat prompts = rng.normal_matrix(3, 8);
  Eigen::RowVectorXd z1 = classify_logits(u, prompts, 1.0);
  Eigen::RowVectorXd z3 = classify_logits(3.0 * u, prompts, 1.0);
  CHECK((z1 - z3).cwiseAbs().maxCoeff() <= 1e-7);
  CHECK_THROWS_AS(classify_logits(Eigen::RowVectorXd::Zero(8), prompts, 1.0), std::invalid_argument);
  prompts.row(1).setZero();
  CHECK_THROWS_AS(classify_logits(u, prompts, 1.0), std::invalid_argument);

  Tape tape;
  Mat good = rng.normal_matrix(3, 8);
  Var zt = classify_logits(tape.constant(u), tape.constant(good), 2.0);
  CHECK((zt.value() - Mat(classify_logits(u, good, 2.0))).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("cross entropy values") {
  CHECK(std::abs(cross_entropy_loss(Eigen::RowVectorXd::Constant(6, 0.3), 4) - std::log(6.0)) <= 1e-9);
  Eigen::RowVectorXd z(2);
  z << 10.0, -10.0;
  const double oracle = std::log1p(std::exp(-20.0));
  CHECK(cross_entropy_loss(z, 0) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(cross_entropy_loss(z, 0) == doctest::Approx(2.06e-9).epsilon(1e-2));
  Rng rng(2);
  for (int k = 0; k < 50; ++k) {
    Eigen::RowVectorXd r = 20.0 * rng.normal_matrix(1, 5);
    CHECK(cross_entropy_loss(r, static_cast<int>(rng.below(5))) >= 0.0);
    CHECK(softmax(r).sum() == doctest::Approx(1.0));
  }
  Tape tape;
  CHECK(cross_entropy_loss(tape.constant(Mat(z)), 1).value()(0, 0) == doctest::Approx(cross_entropy_loss(z, 1)));
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(1e-4, 0, 10) == doctest::Approx(1e-4));
  CHECK(cosine_lr(1e-4, 9, 10) == doctest::Approx(0.0));
  CHECK(cosine_lr(1e-4, 3, 7) == doctest::Approx(0.5e-4));
  CHECK(cosine_lr(2.0, 0, 1) == 2.0);
}

TEST_CASE("adamw: zero gradients only decay flagged weights") {
  ParamStore store;
  Parameter& w = store.create("w", Mat::Constant(2, 2, 3.0), true);
  Parameter& b = store.create("b", Mat::Constant(1, 2, 3.0), false);
  store.zero_grad();
  AdamW opt;
  opt.step(store.all(), 0.1);
  CHECK(w.value(0, 0) == doctest::Approx(3.0 * (1.0 - 0.1 * 0.05)));
  CHECK(b.value(0, 0) == 3.0);
}

TEST_CASE("adamw: first step moves each coordinate by about lr") {
  ParamStore store;
  Parameter& b = store.create("b", Mat::Zero(1, 3), false);
  b.grad = Mat(1, 3);
  b.grad << 0.5, -2.0, 1e-3;
  AdamW opt;
  opt.step(store.all(), 0.01);
  CHECK(b.value(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(b.value(0, 1) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(opt.steps() == 1);
  CHECK(opt.state().at("b").m(0, 1) == doctest::Approx(-0.2));
}

TEST_CASE("training: learning rate zero leaves parameters unchanged") {
  testing::QuietLog quiet;
  auto toy = testing::make_small_toy(3, 2);
  ConsorModel model(small_model(), 1);
  FeatureCache cache(*toy.provider);
  Trainer trainer(model, toy.data.dataset, toy.data.prompts, cache, TrainConfig{});
  const auto before = snapshot(model.params());
  auto m = trainer.train_step(all_samples(toy.data.dataset), 0.0);
  CHECK(std::isfinite(m.loss));
  CHECK(snapshot(model.params()) == before);
  CHECK(trainer.optimizer().steps() == 1);
  double moment_mass = 0.0;
  for (const auto& [name, mom] : trainer.optimizer().state()) moment_mass += mom.v.sum();
  CHECK(moment_mass > 0.0);
}

TEST_CASE("training is deterministic") {
  testing::QuietLog quiet;
  auto toy = testing::make_small_toy(4, 4);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 10;
  cfg.lr = 1e-3;
  cfg.seed = 9;
  auto run = [&] {
    ConsorModel model(small_model(), 7);
    FeatureCache cache(*toy.provider);
    Trainer trainer(model, toy.data.dataset, toy.data.prompts, cache, cfg);
    std::vector<double> losses;
    for (const auto& m : trainer.run()) losses.push_back(m.loss);
    return losses;
  };
  auto a = run();
  auto b = run();
  CHECK(a.size() == 6);
  CHECK(a == b);
  CHECK(epoch_order(20, 1, 0) == epoch_order(20, 1, 0));
  CHECK(epoch_order(20, 1, 0) != epoch_order(20, 1, 1));
}

TEST_CASE("training overfits one fixed toy batch") {
  testing::QuietLog quiet;
  auto toy = testing::make_small_toy(5, 2);
  ConsorModel model(small_model(), 3);
  FeatureCache cache(*toy.provider);
  TrainConfig cfg;
  cfg.logit_scale = 10.0;
  cfg.lr = 1e-3;
  Trainer trainer(model, toy.data.dataset, toy.data.prompts, cache, cfg);
  auto batch = all_samples(toy.data.dataset);
  double first = 0.0, last = 0.0;
  for (int s = 0; s < 200; ++s) {
    auto m = trainer.train_step(batch, cfg.lr);
    if (s == 0) first = m.loss;
    last = m.loss;
  }
  MESSAGE("batch loss " << first << " -> " << last);
  CHECK(last < 0.05);
}

TEST_CASE("non-finite loss aborts with a dump") {
  testing::QuietLog quiet;
  auto toy = testing::make_small_toy(6, 2);
  ConsorModel model(small_model(), 3);
  FeatureCache cache(*toy.provider);
  model.params().at("cir.pair_proj.bias").value(0, 0) = std::nan("");
  Trainer trainer(model, toy.data.dataset, toy.data.prompts, cache, TrainConfig{});
  try {
    trainer.train_step(all_samples(toy.data.dataset), 1e-4);
    FAIL("expected an error");
  } catch (const NonFiniteLossError& e) {
    CHECK(e.dump().is_object());
  }
}

TEST_CASE("grad check") {
  testing::QuietLog quiet;
  auto toy = testing::make_small_toy(7, 1);
  ConsorModel model(small_model(), 5);
  for (Parameter* p : model.params().all()) {
    if (p->name.find("gate_") != std::string::npos) p->value.setConstant(0.03);
  }
  FeatureCache cache(*toy.provider);
  auto samples = all_samples(toy.data.dataset);
  samples.resize(2);
  LossBuilder loss = [&](Tape& tape) {
    return model.forward(tape, toy.data.dataset, toy.data.prompts, cache, samples, 1.0, true).loss;
  };

  SUBCASE("backprop matches central differences") {
    // a small step keeps truncation error on the sharp gate sigmoids below the
    // tolerance; the floor absorbs float64 cancellation on tiny gradients
    GradCheckOptions opts;
    opts.n_coords = 120;
    opts.step = 1e-5;
    opts.abs_floor = 1e-6;
    auto report = grad_check(model.params(), loss, opts);
    MESSAGE("max rel error " << report.max_rel_error);
    for (const auto& e : report.failing()) {
      MESSAGE(e.param << "[" << e.index << "] analytic " << e.analytic << " numeric " << e.numeric);
    }
    CHECK(report.entries.size() == 120);
    CHECK(report.passed());
    bool msat = false, cir = false;
    for (const auto& e : report.entries) {
      msat = msat || e.param.rfind("msat.", 0) == 0;
      cir = cir || e.param.rfind("cir.", 0) == 0;
    }
    CHECK(msat);
    CHECK(cir);
  }
  SUBCASE("a corrupted gradient is reported") {
    GradCheckOptions opts;
    opts.n_coords = 4;
    opts.prefixes = {"cir.pair_proj.weight"};
    opts.after_backward = [](ParamStore& s) { s.at("cir.pair_proj.weight").grad.array() += 0.5; };
    auto report = grad_check(model.params(), loss, opts);
    CHECK_FALSE(report.passed());
    REQUIRE_FALSE(report.failing().empty());
    CHECK(report.failing()[0].param == "cir.pair_proj.weight");
  }
  SUBCASE("no coordinates is a vacuous pass") {
    GradCheckOptions opts;
    opts.n_coords = 0;
    auto report = grad_check(model.params(), loss, opts);
    CHECK(report.entries.empty());
    CHECK(report.passed());
  }
}

TEST_CASE("checkpoint round trip is bitwise") {
  testing::QuietLog quiet;
  testing::TempDir dir;
  auto toy = testing::make_small_toy(8, 2);
  ConsorModel model(small_model(), 11);
  FeatureCache cache(*toy.provider);
  TrainConfig cfg;
  cfg.lr = 1e-3;
  Trainer trainer(model, toy.data.dataset, toy.data.prompts, cache, cfg);
  auto batch = all_samples(toy.data.dataset);
  trainer.train_step(batch, 1e-3);
  trainer.train_step(batch, 1e-3);

  CheckpointInfo info{model.config(), cfg, trainer.step(), 0, config_hash(model.config(), cfg), {{"taxonomy", "pisc-coarse"}}};
  save_checkpoint(dir / "ck", model, trainer.optimizer(), info);
  LoadedCheckpoint loaded = load_checkpoint(dir / "ck");
  CHECK(loaded.info.extra["taxonomy"] == "pisc-coarse");
  CHECK(loaded.optimizer.steps() == 2);

  auto logits = [&](const ConsorModel& m) {
    Tape tape(false);
    std::vector<Mat> out;
    for (Var v : m.forward(tape, toy.data.dataset, toy.data.prompts, cache, batch, 1.0, false).logits) out.push_back(v.value());
    return out;
  };
  CHECK(logits(model) == logits(*loaded.model));
  for (const auto& [name, mom] : trainer.optimizer().state()) {
    CHECK(loaded.optimizer.state().at(name).m == mom.m);
    CHECK(loaded.optimizer.state().at(name).v == mom.v);
  }

  auto manifest = read_json_file(dir / "ck" / "manifest.json");
  manifest["config_hash"] = "0000";
  write_json_file(dir / "ck" / "manifest.json", manifest);
  CHECK_THROWS(load_checkpoint(dir / "ck"));
}
