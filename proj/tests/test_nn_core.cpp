#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ulab/core/rng.hpp"
#include "ulab/nn/checkpoint.hpp"
#include "ulab/nn/checkpoint_io.hpp"
#include "ulab/nn/network.hpp"

using namespace ulab;
using namespace ulab::nn;

namespace {

Tensor<float> random_input(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> x = Tensor<float>::zeros({n, dim});
  for (auto& v : x.data) v = static_cast<float>(rng.normal());
  return x;
}

}  // namespace

TEST_CASE("zero-weight network emits all-zero logits and a uniform softmax", "[nn]") {
  auto spec = mlp_tiny(8, 10);
  Network<float> net(spec);
  auto ckpt = net.init(7);
  for (auto& p : ckpt.params) p = 0.0f;
  auto x = random_input(5, 8, 3);
  auto out = net.forward_eval(ckpt, x, false);
  for (float v : out.logits.data) REQUIRE(v == 0.0f);
  auto probs = softmax(out.logits);
  for (float v : probs.data) REQUIRE(v == Catch::Approx(0.1).margin(1e-6));
}

TEST_CASE("eval forward is bitwise deterministic", "[nn]") {
  auto spec = mlp_tiny(8, 10);
  Network<float> net(spec);
  auto ckpt = net.init(7);
  auto x = random_input(9, 8, 4);
  auto a = net.forward_eval(ckpt, x, false);
  auto b = net.forward_eval(ckpt, x, false);
  REQUIRE(a.logits.data == b.logits.data);
  auto [la, ta] = net.forward(ckpt, x, Mode::eval);
  REQUIRE_FALSE(ta.has_value());
  REQUIRE(la.data == a.logits.data);
}

TEST_CASE("softmax rows sum to one", "[nn][property]") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(8), c = 2 + rng.below(12);
    Tensor<float> logits = Tensor<float>::zeros({n, c});
    for (auto& v : logits.data) v = static_cast<float>(rng.uniform(-30, 30));
    auto p = softmax(logits);
    for (std::size_t r = 0; r < n; ++r) {
      double sum = 0;
      for (std::size_t j = 0; j < c; ++j) sum += p.row(r)[j];
      REQUIRE(sum == Catch::Approx(1.0).margin(1e-5));
    }
  }
}

TEST_CASE("train-mode forward yields a trace and non-finite weights are caught", "[nn]") {
  auto spec = mlp_tiny(8, 4);
  Network<float> net(spec);
  auto ckpt = net.init(1);
  auto x = random_input(6, 8, 5);
  auto [logits, trace] = net.forward(ckpt, x, Mode::train);
  REQUIRE(trace.has_value());
  REQUIRE(logits.rows() == 6);
  REQUIRE(logits.row_size() == 4);

  ckpt.params[0] = std::numeric_limits<float>::infinity();
  REQUIRE_THROWS_AS(net.forward_eval(ckpt, x, false), Error);
}

TEST_CASE("forward rejects shape and spec mismatches", "[nn]") {
  Network<float> net(mlp_tiny(8, 4));
  auto ckpt = net.init(1);
  REQUIRE_THROWS_AS(net.forward_eval(ckpt, random_input(3, 9, 2), false), Error);
  Network<float> other(mlp_tiny(9, 4));
  REQUIRE_THROWS_AS(other.forward_eval(ckpt, random_input(3, 9, 2), false), Error);
}

TEST_CASE("interpolation endpoints are exact and the midpoint is linear", "[checkpoint]") {
  Network<float> net(mlp_tiny(4, 3, 8));
  auto a = net.init(1);
  auto b = net.init(2);
  REQUIRE(interpolate(a, b, 0.0).params == a.params);
  REQUIRE(interpolate(a, b, 0.0).bn_stats == a.bn_stats);
  REQUIRE(interpolate(a, b, 1.0).params == b.params);

  auto a2 = a, b2 = a;
  a2.params[0] = 0.0f;
  a2.params[1] = 2.0f;
  b2.params[0] = 2.0f;
  b2.params[1] = 0.0f;
  auto mid = interpolate(a2, b2, 0.5);
  REQUIRE(mid.params[0] == 1.0f);
  REQUIRE(mid.params[1] == 1.0f);

  REQUIRE_THROWS_AS(interpolate(a, b, 1.5), Error);
  REQUIRE_THROWS_AS(interpolate(a, b, -0.1), Error);
}

TEST_CASE("interpolation is symmetric and keeps variances positive", "[checkpoint][property]") {
  Network<float> net(mlp_tiny(4, 3, 8));
  auto a = net.init(3);
  auto b = net.init(4);
  Rng rng(9);
  for (auto& v : a.bn_stats) v = static_cast<float>(std::abs(rng.normal()) + 0.01);
  for (auto& v : b.bn_stats) v = static_cast<float>(std::abs(rng.normal()) + 0.01);
  for (int k = 0; k <= 64; ++k) {
    const double alpha = static_cast<double>(k) / 64.0;  // dyadic: 1 - alpha is exact
    auto ab = interpolate(a, b, alpha);
    auto ba = interpolate(b, a, 1.0 - alpha);
    REQUIRE(ab.params == ba.params);
    REQUIRE(ab.bn_stats == ba.bn_stats);
    for (float v : ab.bn_stats) REQUIRE(v > 0.0f);
  }
}

TEST_CASE("l2 distance: identity, single shift, naive oracle, triangle inequality", "[checkpoint]") {
  Network<float> net(mlp_tiny(4, 3, 8));
  auto a = net.init(5);
  REQUIRE(l2_param_distance(a, a) == 0.0);

  auto b = a;
  b.params[10] += 3.0f;
  REQUIRE(l2_param_distance(a, b) == Catch::Approx(3.0));
  REQUIRE(l2_param_distance(b, a) == Catch::Approx(3.0));

  auto c = net.init(6);
  double naive = 0;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    const double d = static_cast<double>(a.params[i]) - static_cast<double>(c.params[i]);
    naive += d * d;
  }
  naive = std::sqrt(naive);
  REQUIRE(l2_param_distance(a, c) == Catch::Approx(naive).epsilon(1e-6));

  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = net.init(rng.next_u64());
    auto y = net.init(rng.next_u64());
    auto z = net.init(rng.next_u64());
    REQUIRE(l2_param_distance(x, z) <=
            l2_param_distance(x, y) + l2_param_distance(y, z) + 1e-6);
  }

  Network<float> other(mlp_tiny(5, 3, 8));
  REQUIRE_THROWS_AS(l2_param_distance(a, other.init(1)), Error);
}

TEST_CASE("perturb: attenuate, exact dropout count, degenerate gaussian", "[checkpoint]") {
  // dense 10 -> 10 gives exactly 100 weight-matrix entries
  ModelSpec s;
  s.input = {10};
  s.classes = 10;
  s.layers = {{LayerKind::dense, "only", 10, 10}};
  s.taps = {0, 0};
  Network<float> net(s);
  const Layout& layout = net.layout();

  auto ckpt = net.init(1);
  for (auto& p : ckpt.params) p = 2.0f;

  SECTION("attenuate 0.5 halves every parameter") {
    auto out = perturb(ckpt, layout, PerturbKind::attenuate, 0.5, 9);
    for (float p : out.params) REQUIRE(p == 1.0f);
    REQUIRE(out.bn_stats == ckpt.bn_stats);
  }
  SECTION("dropout 0.2 on 100 weights zeroes exactly 20") {
    auto out = perturb(ckpt, layout, PerturbKind::dropout, 0.2, 9, /*weights_only=*/true);
    int zeros = 0;
    for (std::size_t i = 0; i < 100; ++i)
      if (out.params[i] == 0.0f) ++zeros;
    REQUIRE(zeros == 20);
    // biases untouched
    for (std::size_t i = 100; i < out.params.size(); ++i) REQUIRE(out.params[i] == 2.0f);
  }
  SECTION("gaussian sigma 0 is the identity") {
    auto out = perturb(ckpt, layout, PerturbKind::gaussian, 0.0, 9);
    REQUIRE(out.params == ckpt.params);
  }
  SECTION("same seed, same perturbation") {
    auto a = perturb(ckpt, layout, PerturbKind::gaussian, 0.1, 42);
    auto b = perturb(ckpt, layout, PerturbKind::gaussian, 0.1, 42);
    REQUIRE(a.params == b.params);
    auto c = perturb(ckpt, layout, PerturbKind::gaussian, 0.1, 43);
    REQUIRE(a.params != c.params);
  }
  SECTION("invalid magnitudes are rejected") {
    REQUIRE_THROWS_AS(perturb(ckpt, layout, PerturbKind::attenuate, 0.0, 1), Error);
    REQUIRE_THROWS_AS(perturb(ckpt, layout, PerturbKind::dropout, 1.0, 1), Error);
    REQUIRE_THROWS_AS(perturb(ckpt, layout, PerturbKind::gaussian, -0.1, 1), Error);
  }
}

TEST_CASE("checkpoint files round-trip bit-exactly", "[checkpoint][io]") {
  auto spec = conv_tiny(1, 8, 8, 10);
  Network<float> net(spec);
  auto ckpt = net.init(123);
  ckpt.step_count = 4242;
  Rng rng(5);
  for (auto& v : ckpt.bn_stats) v = static_cast<float>(std::abs(rng.normal()) + 0.5);

  const std::string buf = encode_checkpoint(spec, ckpt);
  auto back = decode_checkpoint(buf, spec);
  REQUIRE(back.params == ckpt.params);
  REQUIRE(back.bn_stats == ckpt.bn_stats);
  REQUIRE(back.spec_hash == ckpt.spec_hash);
  REQUIRE(back.step_count == ckpt.step_count);
  REQUIRE(encode_checkpoint(spec, back) == buf);

  SECTION("bad magic names the offset") {
    std::string corrupt = buf;
    corrupt[2] = 'X';
    REQUIRE_THROWS_WITH(decode_checkpoint(corrupt, spec),
                        Catch::Matchers::ContainsSubstring("offset 2"));
  }
  SECTION("wrong spec is rejected") {
    auto other = mlp_tiny(8, 10);
    REQUIRE_THROWS_AS(decode_checkpoint(buf, other), Error);
  }
  SECTION("truncation is rejected") {
    std::string corrupt = buf.substr(0, buf.size() - 3);
    REQUIRE_THROWS_AS(decode_checkpoint(corrupt, spec), Error);
  }
}

TEST_CASE("model spec hash is order- and content-sensitive", "[nn]") {
  auto a = mlp_tiny(8, 10);
  auto b = mlp_tiny(8, 10);
  REQUIRE(a.hash() == b.hash());
  b.layers[0].out = 65;
  REQUIRE(a.hash() != b.hash());
  auto c = mlp_tiny(8, 10);
  c.taps = {2, 4};
  REQUIRE(a.hash() != c.hash());
}
