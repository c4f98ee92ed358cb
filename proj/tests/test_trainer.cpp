#include <catch2/catch_amalgamated.hpp>

#include "ulab/data/synthetic.hpp"
#include "ulab/data/typicality.hpp"
#include "ulab/train/trainer.hpp"

using namespace ulab;
using namespace ulab::train;
using namespace ulab::data;

TEST_CASE("cosine schedule hits its endpoints and midpoint and never increases", "[trainer]") {
  const double lr0 = 2e-3;
  REQUIRE(cosine_lr(0, 100, lr0, 0.1) == Catch::Approx(lr0));
  REQUIRE(cosine_lr(100, 100, lr0, 0.1) == Catch::Approx(0.1 * lr0));
  REQUIRE(cosine_lr(50, 100, lr0, 0.1) == Catch::Approx(0.55 * lr0));
  REQUIRE(cosine_lr(-5, 100, lr0, 0.1) == Catch::Approx(lr0));   // clamped
  REQUIRE(cosine_lr(999, 100, lr0, 0.1) == Catch::Approx(0.1 * lr0));
  double prev = cosine_lr(0, 1000, lr0, 0.25);
  for (int s = 1; s <= 1000; ++s) {
    const double cur = cosine_lr(s, 1000, lr0, 0.25);
    REQUIRE(cur <= prev + 1e-15);
    prev = cur;
  }
}

TEST_CASE("adam: zero gradient fixed point, hand-computed step, decay shrinkage", "[trainer]") {
  SECTION("zero grad, zero decay leaves parameters unchanged") {
    OptimState st = OptimState::zeros(3);
    std::vector<float> p = {1.0f, -2.0f, 0.5f};
    const auto before = p;
    adam_step(st, p, {0.0f, 0.0f, 0.0f}, 1e-3, 0.0);
    REQUIRE(p == before);
  }
  SECTION("single parameter single step matches hand arithmetic") {
    OptimState st = OptimState::zeros(1);
    std::vector<float> p = {0.7f};
    const double g = 0.3, lr = 0.01;
    adam_step(st, p, {static_cast<float>(g)}, lr, 0.0);
    // m = 0.1*g/0.1 = g; v = 0.001*g^2/0.001 = g^2 after bias correction
    const double expect = 0.7 - lr * g / (std::sqrt(g * g) + 1e-8);
    REQUIRE(p[0] == Catch::Approx(expect).margin(1e-7));
  }
  SECTION("weight decay with zero gradient strictly shrinks magnitudes") {
    OptimState st = OptimState::zeros(2);
    std::vector<float> p = {1.0f, -3.0f};
    adam_step(st, p, {0.0f, 0.0f}, 0.1, 0.01);
    REQUIRE(std::abs(p[0]) < 1.0f);
    REQUIRE(std::abs(p[1]) < 3.0f);
    REQUIRE(p[1] < 0.0f);
  }
  SECTION("non-finite gradients are rejected") {
    OptimState st = OptimState::zeros(1);
    std::vector<float> p = {1.0f};
    REQUIRE_THROWS_AS(adam_step(st, p, {std::numeric_limits<float>::quiet_NaN()}, 0.1, 0.0),
                      Error);
  }
}

namespace {

SyntheticConfig tiny_data_cfg() {
  SyntheticConfig cfg;
  cfg.classes = 4;
  cfg.per_class = 60;
  cfg.atypical_fraction = 0.2;
  cfg.input_dim = 8;
  cfg.island_size = 4;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("training is bitwise deterministic for a fixed seed", "[trainer]") {
  auto cfg = tiny_data_cfg();
  auto [d, scores] = make_synthetic(cfg);
  nn::Network<float> net(nn::mlp_tiny(cfg.input_dim, cfg.classes, 16));
  TrainConfig tc;
  tc.lr = 3e-3;
  tc.epochs = 3;
  tc.batch_size = 32;
  tc.seed = 9;

  auto run = [&](std::vector<MetricsRecord>* metrics) {
    PhaseHooks hooks;
    hooks.phase = "pretrain";
    hooks.metrics = metrics;
    hooks.eval = make_metric_eval(net, &d, nullptr);
    return fit(net, net.init(1), d, tc, std::move(hooks));
  };
  std::vector<MetricsRecord> m1, m2;
  auto c1 = run(&m1);
  auto c2 = run(&m2);
  REQUIRE(c1.params == c2.params);
  REQUIRE(c1.bn_stats == c2.bn_stats);
  REQUIRE(m1.size() == m2.size());
  for (std::size_t i = 0; i < m1.size(); ++i) {
    REQUIRE(m1[i].step == m2[i].step);
    REQUIRE(m1[i].test_acc == m2[i].test_acc);
    REQUIRE(m1[i].train_loss == m2[i].train_loss);
  }
}

TEST_CASE("metric cadence: a record every eval_every steps plus the final step", "[trainer]") {
  auto cfg = tiny_data_cfg();
  auto [d, scores] = make_synthetic(cfg);
  nn::Network<float> net(nn::mlp_tiny(cfg.input_dim, cfg.classes, 16));
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.epochs = 3;
  tc.batch_size = 32;  // 240 examples -> 8 steps/epoch -> 24 steps total
  tc.eval_every = 10;
  std::vector<MetricsRecord> metrics;
  PhaseHooks hooks;
  hooks.phase = "pretrain";
  hooks.metrics = &metrics;
  auto ckpt = fit(net, net.init(2), d, tc, std::move(hooks));
  REQUIRE(ckpt.step_count == 24);
  std::vector<std::int64_t> steps;
  for (const auto& r : metrics) steps.push_back(r.step);
  REQUIRE(steps == std::vector<std::int64_t>{10, 20, 24});
}

TEST_CASE("divergence aborts with the offending step", "[trainer]") {
  auto cfg = tiny_data_cfg();
  auto [d, scores] = make_synthetic(cfg);
  nn::Network<float> net(nn::mlp_tiny(cfg.input_dim, cfg.classes, 16));
  TrainConfig tc;
  tc.lr = 1e38;  // guaranteed blow-up past float range within a few steps
  tc.epochs = 2;
  tc.batch_size = 32;
  REQUIRE_THROWS_WITH(fit(net, net.init(3), d, tc, {}),
                      Catch::Matchers::ContainsSubstring("step"));
}

TEST_CASE("the train loop touches only the ids it was given", "[trainer][audit]") {
  auto cfg = tiny_data_cfg();
  auto [d, scores] = make_synthetic(cfg);
  auto [t, ts] = make_synthetic_test(cfg, 10);
  ForgetSpec spec;
  spec.scope = ForgetScope::class_agnostic;
  spec.typicality = ForgetTypicality::atypical;
  spec.count = 20;
  auto bundle = build_bundle(d, scores, t, ts, spec, 0, 1);

  nn::Network<float> net(nn::mlp_tiny(cfg.input_dim, cfg.classes, 16));
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.epochs = 2;
  tc.batch_size = 32;

  SECTION("retain-only training passes the audit") {
    AccessAudit audit;
    PhaseHooks hooks;
    hooks.phase = "retrain";
    hooks.audit = &audit;
    retrain_from_scratch(net, net.init(0), bundle, tc, std::move(hooks));
    REQUIRE(audit.ok());
  }
  SECTION("training on data outside the contract is flagged") {
    AccessAudit audit;
    audit.allow("retrain", bundle.ids_at(bundle.retain_idx));
    PhaseHooks hooks;
    hooks.phase = "retrain";
    hooks.audit = &audit;
    fit(net, net.init(0), d, tc, std::move(hooks));  // full set, forget ids included
    REQUIRE_FALSE(audit.ok());
    REQUIRE_THROWS_AS(audit.require_clean(), AuditError);
    // exactly the forget ids (times epochs) should be flagged
    std::set<std::uint32_t> flagged;
    for (const auto& v : audit.violations()) flagged.insert(v.id);
    std::set<std::uint32_t> forget_ids;
    for (auto id : bundle.ids_at(bundle.forget_idx)) forget_ids.insert(id);
    REQUIRE(flagged == forget_ids);
  }
  SECTION("phases with no registered contract fail closed") {
    AccessAudit audit;
    audit.log_train_access("mystery", {1, 2, 3});
    REQUIRE_FALSE(audit.ok());
  }
}

TEST_CASE("holdout typicality: separable data scores high, poisoned points score zero",
          "[data][typicality]") {
  // two well-separated blobs
  SyntheticConfig cfg;
  cfg.classes = 2;
  cfg.per_class = 60;
  cfg.atypical_fraction = 0.2;  // islands are mislabeled-by-construction points
  cfg.input_dim = 6;
  cfg.island_size = 4;
  cfg.seed = 12;
  auto [d, truth] = make_synthetic(cfg);

  // poison one extra example: a point in class-0 territory labeled 1, with
  // no duplicate anywhere -- never predictable, whatever trained on it
  {
    std::vector<std::size_t> shape = d.x.shape;
    shape[0] += 1;
    Tensor<float> grown = Tensor<float>::zeros(shape);
    std::copy(d.x.data.begin(), d.x.data.end(), grown.data.begin());
    const std::size_t cls0 = 0;  // first row is a typical class-0 example
    for (std::size_t k2 = 0; k2 < d.x.row_size(); ++k2)
      grown.row(d.size())[k2] = d.x.row(cls0)[k2] + 0.01f;
    d.x = std::move(grown);
    d.labels.push_back(1);
    d.ids.push_back(static_cast<std::uint32_t>(d.size() - 1) + 100000u);
  }
  const std::size_t poisoned = d.size() - 1;

  nn::Network<float> net(nn::mlp_tiny(cfg.input_dim, cfg.classes, 12));
  TrainConfig fold_cfg;
  fold_cfg.lr = 5e-3;
  fold_cfg.epochs = 15;
  fold_cfg.batch_size = 32;

  AccessAudit audit;
  const int k = 4;
  auto scores = score_typicality_holdout(net, d, fold_cfg, k, 3, &audit);
  REQUIRE(audit.ok());
  REQUIRE(scores.method == "holdout_consistency");

  // grid {0, 1/k, ..., 1}
  for (float s : scores.score) {
    const float scaled = s * static_cast<float>(k);
    REQUIRE(scaled == Catch::Approx(std::round(scaled)).margin(1e-6));
  }

  REQUIRE(scores.score[poisoned] == 0.0f);

  // typical examples score high; ground-truth islands land strictly lower
  std::vector<float> typical_scores;
  double island_mean = 0, typical_mean = 0;
  std::size_t islands = 0;
  for (std::size_t i = 0; i + 1 < d.size(); ++i) {
    if (truth.score[i] > 0.5f) {
      typical_scores.push_back(scores.score[i]);
      typical_mean += scores.score[i];
    } else {
      island_mean += scores.score[i];
      ++islands;
    }
  }
  typical_mean /= static_cast<double>(typical_scores.size());
  island_mean /= static_cast<double>(islands);
  std::sort(typical_scores.begin(), typical_scores.end());
  REQUIRE(typical_scores[typical_scores.size() / 2] >= 0.9f);
  REQUIRE(island_mean < typical_mean - 0.2);

  REQUIRE_THROWS_AS(score_typicality_holdout(net, d, fold_cfg, 2, 3, nullptr), Error);
}
