#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "ulab/exp/config.hpp"
#include "ulab/exp/manifest.hpp"
#include "ulab/exp/report.hpp"
#include "ulab/exp/svg.hpp"
#include "ulab/exp/toml.hpp"

using namespace ulab;
using namespace ulab::exp;

TEST_CASE("toml subset: tables, arrays of tables, values, comments", "[exp][toml]") {
  const std::string text = R"(
# experiment
preset = "desk"
seed = 7
threads = 2

[dataset]
classes = 4          # inline comment
atypical_fraction = 0.1
flags = [1, 2, 3]
names = ["a", "b"]

[[methods]]
name = "scrub"
method = "scrub"

[methods.params]
kl_weight = 1.5

[[methods]]
method = "cbft"
)";
  auto j = toml::parse(text);
  REQUIRE(j["preset"] == "desk");
  REQUIRE(j["seed"] == 7);
  REQUIRE(j["dataset"]["classes"] == 4);
  REQUIRE(j["dataset"]["atypical_fraction"] == 0.1);
  REQUIRE(j["dataset"]["flags"] == nlohmann::json({1, 2, 3}));
  REQUIRE(j["dataset"]["names"] == nlohmann::json({"a", "b"}));
  REQUIRE(j["methods"].size() == 2);
  REQUIRE(j["methods"][0]["params"]["kl_weight"] == 1.5);
  REQUIRE(j["methods"][1]["method"] == "cbft");

  REQUIRE_THROWS_AS(toml::parse("key"), ConfigError);
  REQUIRE_THROWS_AS(toml::parse("a = \"unterminated"), ConfigError);
  REQUIRE_THROWS_AS(toml::parse("a = 1\na = 2"), ConfigError);
  REQUIRE_THROWS_WITH(toml::parse("\n\nbroken ="), Catch::Matchers::ContainsSubstring("line 3"));
}

TEST_CASE("config: presets resolve, toml and json mirrors agree", "[exp][config]") {
  const std::string toml_text = R"(
preset = "desk"
seed = 3
[dataset]
classes = 6
per_class = 120
atypical_fraction = 0.1
input_dim = 16
[forget]
class_id = 2
[attack]
relearn_sizes = [0, 5]
)";
  const std::string json_text = R"({
  "preset": "desk",
  "seed": 3,
  "dataset": {"classes": 6, "per_class": 120, "atypical_fraction": 0.1, "input_dim": 16},
  "forget": {"class_id": 2},
  "attack": {"relearn_sizes": [0, 5]}
})";
  auto a = load_config_text(toml_text, true);
  auto b = load_config_text(json_text, false);
  REQUIRE(a.to_json() == b.to_json());
  REQUIRE(a.hash() == b.hash());
  REQUIRE(a.dataset.synth.classes == 6);
  REQUIRE(a.forget.class_id == 2);
  REQUIRE(a.methods.size() == 13);
  REQUIRE(a.attack.relearn_sizes == std::vector<int>{0, 5});

  // defaults differ between presets
  auto desk = desk_defaults(0);
  auto paper = paper_defaults(0);
  REQUIRE(desk.pretrain.epochs == 100);
  REQUIRE(paper.pretrain.epochs == 300);
  REQUIRE(paper.pretrain.lr == 1e-4);
  REQUIRE(paper.pretrain.batch_size == 128);
  REQUIRE(paper.unlearn_defaults.lr == 1e-5);
  REQUIRE(paper.unlearn_defaults.epochs == 100);
  REQUIRE(paper.unlearn_defaults.weight_decay == 0.0);
  REQUIRE(desk.unlearn_defaults.epochs == 30);
  REQUIRE(desk.attack.relearn_epochs == 10);
}

TEST_CASE("config: unknown keys and malformed entries are rejected", "[exp][config]") {
  REQUIRE_THROWS_AS(load_config_text("banana = 1", true), Error);
  REQUIRE_THROWS_AS(load_config_text("[dataset]\nbanana = 1", true), Error);
  REQUIRE_THROWS_AS(load_config_text("preset = \"imaginary\"", true), ConfigError);
  REQUIRE_THROWS_AS(load_config_text(R"(
[[methods]]
method = "not_a_method"
)",
                                     true),
                    Error);
  REQUIRE_THROWS_AS(load_config_text(R"(
[[methods]]
method = "tar"
)",
                                     true),
                    Error);  // tar without a safeguard
  REQUIRE_THROWS_AS(load_config_text(R"(
[[methods]]
name = "a"
method = "scrub"
[[methods]]
name = "a"
method = "cbft"
)",
                                     true),
                    Error);  // duplicate names
}

TEST_CASE("aggregate_tail: constant stream, short stream, hand oracle", "[exp][aggregate]") {
  using train::MetricsRecord;
  auto rec = [](std::int64_t step, double t, double f) {
    MetricsRecord r;
    r.phase = "x";
    r.step = step;
    r.test_acc = t;
    r.forget_ho_acc = f;
    return r;
  };

  SECTION("constant stream averages to the constant") {
    std::vector<MetricsRecord> s;
    for (int i = 1; i <= 12; ++i) s.push_back(rec(10 * i, 0.8, 0.3));
    auto p = aggregate_tail(s);
    REQUIRE(p.test_acc == Catch::Approx(0.8));
    REQUIRE(p.forget_ho_acc == Catch::Approx(0.3));
    REQUIRE_FALSE(p.short_window);
  }

  SECTION("three records is a flagged short window") {
    std::vector<MetricsRecord> s = {rec(10, 0.5, 0.1), rec(20, 0.7, 0.2), rec(24, 0.9, 0.3)};
    auto p = aggregate_tail(s);
    REQUIRE(p.short_window);
    REQUIRE(p.records == 3);
    REQUIRE(p.test_acc == Catch::Approx((0.5 + 0.7 + 0.9) / 3.0));
  }

  SECTION("ten-record synthetic stream matches hand arithmetic") {
    // records every 10 steps up to 100: the final 50 steps cover steps
    // 60..100, i.e. records at 60, 70, 80, 90, 100
    std::vector<MetricsRecord> s;
    for (int i = 1; i <= 10; ++i)
      s.push_back(rec(10 * i, 0.1 * i, 1.0 - 0.05 * i));
    auto p = aggregate_tail(s);
    REQUIRE(p.records == 5);
    const double expect_t = (0.6 + 0.7 + 0.8 + 0.9 + 1.0) / 5.0;
    const double expect_f = (1.0 - 0.05 * 6 + 1.0 - 0.05 * 7 + 1.0 - 0.05 * 8 + 1.0 - 0.05 * 9 +
                             1.0 - 0.05 * 10) /
                            5.0;
    REQUIRE(p.test_acc == Catch::Approx(expect_t));
    REQUIRE(p.forget_ho_acc == Catch::Approx(expect_f));
    REQUIRE_FALSE(p.short_window);
  }

  SECTION("an off-cadence final record joins the window") {
    std::vector<MetricsRecord> s;
    for (int i = 1; i <= 8; ++i) s.push_back(rec(10 * i, 0.5, 0.5));
    s.push_back(rec(83, 0.9, 0.9));
    auto p = aggregate_tail(s);
    REQUIRE(p.records == 6);  // steps 40..83
  }
}

TEST_CASE("svg output is deterministic and well formed", "[exp][svg]") {
  auto make = [] {
    Svg svg(200, 100);
    Frame frame;
    frame.draw(svg, "x", "y");
    svg.circle(frame.px(0.5), frame.py(0.25), 3, "#123456");
    svg.polyline({{10, 10}, {20, 30}}, "red");
    svg.text(5, 5, "a<b&c");
    return svg.finish();
  };
  const std::string a = make();
  const std::string b = make();
  REQUIRE(a == b);
  REQUIRE(a.find("<svg") != std::string::npos);
  REQUIRE(a.find("</svg>") != std::string::npos);
  REQUIRE(a.find("a&lt;b&amp;c") != std::string::npos);
}

TEST_CASE("manifest round-trips and validates artifacts", "[exp][manifest]") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "ulab_manifest_test";
  fs::create_directories(dir);
  const std::string mpath = (dir / "manifest.json").string();
  const std::string artifact = (dir / "artifact.txt").string();
  {
    std::ofstream f(artifact);
    f << "payload";
  }

  auto m = RunManifest::fresh(0xabcdef, 3, {{"preset", "desk"}}, kToolVersion);
  m.record_artifact("pretrain", "ckpt:init", artifact);
  m.mark_done("pretrain");
  m.save(mpath);

  auto back = RunManifest::load(mpath);
  REQUIRE(back.matches(0xabcdef));
  REQUIRE_FALSE(back.matches(0x123));
  REQUIRE(back.stage_done("pretrain"));
  REQUIRE_FALSE(back.stage_done("retrain"));
  REQUIRE(back.artifact("pretrain", "ckpt:init") == artifact);
  back.validate(0xabcdef);

  fs::remove(artifact);
  REQUIRE_FALSE(back.stage_done("pretrain"));  // missing artifact invalidates the stage
  REQUIRE_THROWS_AS(back.validate(0xabcdef), Error);
  fs::remove_all(dir);
}
