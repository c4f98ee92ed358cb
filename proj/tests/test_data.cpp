#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>

#include "ulab/data/bundle.hpp"
#include "ulab/data/idx.hpp"
#include "ulab/data/synthetic.hpp"

using namespace ulab;
using namespace ulab::data;

namespace {

SyntheticConfig quick_cfg(std::uint64_t seed = 0) {
  SyntheticConfig cfg;
  cfg.classes = 10;
  cfg.per_class = 500;
  cfg.atypical_fraction = 0.04;
  cfg.input_dim = 16;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("synthetic generator: counts, ground truth and determinism", "[data]") {
  auto cfg = quick_cfg(3);
  auto [d, scores] = make_synthetic(cfg);
  REQUIRE(d.size() == 5000);
  std::size_t atypical = 0;
  for (float s : scores.score)
    if (s == 0.0f) ++atypical;
  REQUIRE(atypical == 200);
  REQUIRE(scores.method == "ground_truth");

  auto [d2, scores2] = make_synthetic(cfg);
  REQUIRE(d.x.data == d2.x.data);
  REQUIRE(d.labels == d2.labels);
  REQUIRE(scores.score == scores2.score);

  auto cfg2 = cfg;
  cfg2.seed = 4;
  auto [d3, scores3] = make_synthetic(cfg2);
  REQUIRE(d.x.data != d3.x.data);

  SECTION("test split continues the id range and has fresh content") {
    auto [t, ts] = make_synthetic_test(cfg, 100);
    REQUIRE(t.size() == 1000);
    REQUIRE(t.ids.front() == 5000);
    REQUIRE(ts.score.size() == t.size());
    // same class geometry, different draws
    REQUIRE(t.x.data != std::vector<float>(d.x.data.begin(), d.x.data.begin() + t.x.data.size()));
  }
  SECTION("infeasible parameters are rejected") {
    auto bad = cfg;
    bad.atypical_fraction = 0.5;
    REQUIRE_THROWS_AS(make_synthetic(bad), Error);
    bad = cfg;
    bad.per_class = 100;  // 100 * 0.04 = 4 < 10
    REQUIRE_THROWS_AS(make_synthetic(bad), Error);
  }
}

TEST_CASE("forget selection sizes follow the spec'd fractions", "[data]") {
  auto cfg = quick_cfg(1);
  cfg.atypical_fraction = 0.10;
  auto [d, scores] = make_synthetic(cfg);
  auto [t, ts] = make_synthetic_test(cfg, 100);

  ForgetSpec sub;
  sub.scope = ForgetScope::sub_class;
  sub.class_id = 0;
  sub.typicality = ForgetTypicality::atypical;
  sub.fraction = 0.10;
  auto b1 = build_bundle(d, scores, t, ts, sub, 0, 7);
  REQUIRE(b1.forget_idx.size() == 50);  // 10% of the 500 class members

  ForgetSpec agn = sub;
  agn.scope = ForgetScope::class_agnostic;
  agn.fraction = 0.01;
  auto b2 = build_bundle(d, scores, t, ts, agn, 0, 7);
  REQUIRE(b2.forget_idx.size() == 50);  // 1% of 5000: same size at matched settings

  SECTION("n_relearn 0 leaves the whole forget set as holdout") {
    REQUIRE(b1.forget_ho_idx == b1.forget_idx);
    REQUIRE(b1.relearn_idx.empty());
  }
  SECTION("requested count beyond the pool is an error") {
    ForgetSpec big = sub;
    big.count = 501;
    REQUIRE_THROWS_AS(build_bundle(d, scores, t, ts, big, 0, 7), Error);
  }
  SECTION("n_relearn beyond the forget set is an error") {
    REQUIRE_THROWS_AS(build_bundle(d, scores, t, ts, sub, 51, 7), Error);
  }
}

TEST_CASE("bundle partition laws hold across random specs and seeds", "[data][property]") {
  auto cfg = quick_cfg(2);
  auto [d, scores] = make_synthetic(cfg);
  auto [t, ts] = make_synthetic_test(cfg, 50);
  Rng rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    ForgetSpec spec;
    spec.scope = rng.below(2) == 0 ? ForgetScope::sub_class : ForgetScope::class_agnostic;
    spec.class_id = static_cast<int>(rng.below(10));
    const auto typ = rng.below(3);
    spec.typicality = typ == 0   ? ForgetTypicality::typical
                      : typ == 1 ? ForgetTypicality::random_pick
                                 : ForgetTypicality::atypical;
    spec.fraction = 0.02 + rng.uniform() * 0.05;
    spec.seed = rng.next_u64();
    const auto seed = rng.next_u64();
    auto bundle = build_bundle(d, scores, t, ts, spec, 5, seed);

    // disjointness + union laws
    std::set<std::uint32_t> retain(bundle.retain_idx.begin(), bundle.retain_idx.end());
    std::set<std::uint32_t> forget(bundle.forget_idx.begin(), bundle.forget_idx.end());
    REQUIRE(retain.size() + forget.size() == d.size());
    for (auto i : forget) REQUIRE(retain.count(i) == 0);
    std::set<std::uint32_t> re(bundle.relearn_idx.begin(), bundle.relearn_idx.end());
    std::set<std::uint32_t> ho(bundle.forget_ho_idx.begin(), bundle.forget_ho_idx.end());
    REQUIRE(re.size() + ho.size() == forget.size());
    for (auto i : re) REQUIRE(forget.count(i) == 1);
    for (auto i : ho) REQUIRE(forget.count(i) == 1);

    // reproducibility
    auto again = build_bundle(d, scores, t, ts, spec, 5, seed);
    REQUIRE(again.forget_idx == bundle.forget_idx);
    REQUIRE(again.relearn_idx == bundle.relearn_idx);

    // nested relearn draws: a larger n keeps the smaller prefix
    auto wider = build_bundle(d, scores, t, ts, spec, 10, seed);
    std::set<std::uint32_t> wide(wider.relearn_idx.begin(), wider.relearn_idx.end());
    for (auto i : re) REQUIRE(wide.count(i) == 1);
  }
}

TEST_CASE("atypical selection picks exactly the lowest scores, ties by id", "[data]") {
  auto cfg = quick_cfg(5);
  auto [d, scores] = make_synthetic(cfg);
  auto [t, ts] = make_synthetic_test(cfg, 50);

  ForgetSpec spec;
  spec.scope = ForgetScope::class_agnostic;
  spec.typicality = ForgetTypicality::atypical;
  spec.count = 120;
  auto bundle = build_bundle(d, scores, t, ts, spec, 0, 3);

  // oracle: order (score, id) pairs explicitly
  std::vector<std::uint32_t> order(d.size());
  for (std::uint32_t i = 0; i < d.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (scores.score[a] != scores.score[b]) return scores.score[a] < scores.score[b];
    return d.ids[a] < d.ids[b];
  });
  std::vector<std::uint32_t> expect(order.begin(), order.begin() + 120);
  std::sort(expect.begin(), expect.end());
  REQUIRE(bundle.forget_idx == expect);

  SECTION("any strictly increasing transform of the scores selects the same ids") {
    TypicalityScores warped = scores;
    for (auto& s : warped.score) s = s * s * 0.5f + 0.25f * s;
    auto other = build_bundle(d, warped, t, ts, spec, 0, 3);
    REQUIRE(other.forget_idx == bundle.forget_idx);
  }
}

TEST_CASE("bundle manifests rebuild identically", "[data]") {
  auto cfg = quick_cfg(8);
  auto [d, scores] = make_synthetic(cfg);
  auto [t, ts] = make_synthetic_test(cfg, 50);
  ForgetSpec spec;
  spec.scope = ForgetScope::sub_class;
  spec.class_id = 3;
  spec.typicality = ForgetTypicality::atypical;
  spec.fraction = 0.04;
  auto bundle = build_bundle(d, scores, t, ts, spec, 4, 11);
  const auto manifest = bundle.manifest();
  auto again = rebuild_bundle(d, scores, t, ts, manifest);
  REQUIRE(again.forget_idx == bundle.forget_idx);
  REQUIRE(again.retain_idx == bundle.retain_idx);
  REQUIRE(again.relearn_idx == bundle.relearn_idx);
  REQUIRE(again.forget_ho_idx == bundle.forget_ho_idx);
  REQUIRE(again.mia_nonmember_pool == bundle.mia_nonmember_pool);
}

TEST_CASE("idx files: round-trip, header counts, corruption errors", "[data][io]") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "ulab_idx_test";
  fs::create_directories(dir);
  const std::string img_path = (dir / "img.idx").string();
  const std::string lbl_path = (dir / "lbl.idx").string();

  SECTION("write-then-read of a small subset is identical") {
    idx::Images img;
    img.count = 10;
    img.rows = 4;
    img.cols = 3;
    Rng rng(4);
    img.pixels.resize(10 * 4 * 3);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
    std::vector<std::uint8_t> labels = {0, 1, 0, 1, 1, 0, 1, 0, 1, 0};
    idx::write_images(img_path, img);
    idx::write_labels(lbl_path, labels);

    auto d = load_idx(img_path, lbl_path);
    REQUIRE(d.size() == 10);
    REQUIRE(d.classes == 2);
    REQUIRE(d.x.shape == std::vector<std::size_t>{10, 1, 4, 3});
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
      REQUIRE(d.x.data[i] == Catch::Approx(img.pixels[i] / 255.0f));

    // byte-exact file round-trip through the writer
    auto back = idx::read_images(img_path);
    REQUIRE(back.pixels == img.pixels);
    REQUIRE(back.rows == img.rows);
  }

  SECTION("the header count field is honored") {
    idx::Images img;
    img.count = 60000;
    img.rows = 1;
    img.cols = 1;
    img.pixels.assign(60000, 7);
    std::vector<std::uint8_t> labels(60000);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::uint8_t>(i % 10);
    idx::write_images(img_path, img);
    idx::write_labels(lbl_path, labels);
    auto d = load_idx(img_path, lbl_path);
    REQUIRE(d.size() == 60000);
  }

  SECTION("corrupted magic names the offset") {
    idx::Images img;
    img.count = 2;
    img.rows = 2;
    img.cols = 2;
    img.pixels.assign(8, 1);
    idx::write_images(img_path, img);
    // stomp the magic
    std::fstream f(img_path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put(static_cast<char>(0xff));
    f.close();
    REQUIRE_THROWS_WITH(idx::read_images(img_path),
                        Catch::Matchers::ContainsSubstring("offset 0"));
  }

  SECTION("truncated payload is rejected with an offset") {
    idx::Images img;
    img.count = 4;
    img.rows = 2;
    img.cols = 2;
    img.pixels.assign(16, 3);
    idx::write_images(img_path, img);
    fs::resize_file(img_path, 16 + 10);  // header + 10 of 16 payload bytes
    REQUIRE_THROWS_WITH(idx::read_images(img_path),
                        Catch::Matchers::ContainsSubstring("truncated"));
  }

  fs::remove_all(dir);
}
