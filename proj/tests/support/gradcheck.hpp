#pragma once

// Central finite-difference oracle for the backward pass, run in 64-bit
// mode on small networks. Kept independent of the analytic path: it only
// ever calls forward + loss evaluation at shifted parameter vectors.

#include <cmath>
#include <string>
#include <vector>

#include "ulab/core/rng.hpp"
#include "ulab/nn/network.hpp"

namespace ulab::testsupport {

struct GradCheckResult {
  double rel_error;
  double analytic_norm;
  double numeric_norm;
};

inline double loss_at(const nn::Network<double>& net, const nn::Checkpoint<double>& ckpt,
                      const Tensor<double>& x, const nn::LossSpec<double>& loss) {
  auto tr = net.forward_train(ckpt, x);
  return net.backward(tr, loss).loss;
}

inline GradCheckResult gradcheck(const nn::Network<double>& net, const nn::Checkpoint<double>& ckpt,
                                 const Tensor<double>& x, const nn::LossSpec<double>& loss,
                                 double h = 1e-5) {
  auto tr = net.forward_train(ckpt, x);
  auto analytic = net.backward(tr, loss).grad;

  std::vector<double> numeric(analytic.size(), 0.0);
  nn::Checkpoint<double> probe = ckpt;
  for (std::size_t i = 0; i < probe.params.size(); ++i) {
    const double orig = probe.params[i];
    probe.params[i] = orig + h;
    const double up = loss_at(net, probe, x, loss);
    probe.params[i] = orig - h;
    const double down = loss_at(net, probe, x, loss);
    probe.params[i] = orig;
    numeric[i] = (up - down) / (2.0 * h);
  }

  double diff = 0, na = 0, nn_ = 0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double d = analytic[i] - numeric[i];
    diff += d * d;
    na += analytic[i] * analytic[i];
    nn_ += numeric[i] * numeric[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn_), 1e-12});
  return {std::sqrt(diff) / denom, std::sqrt(na), std::sqrt(nn_)};
}

inline Tensor<double> random_batch(const std::vector<std::size_t>& input_shape, std::size_t n,
                                   Rng& rng) {
  std::vector<std::size_t> shape;
  shape.push_back(n);
  shape.insert(shape.end(), input_shape.begin(), input_shape.end());
  Tensor<double> x = Tensor<double>::zeros(shape);
  for (auto& v : x.data) v = rng.normal();
  return x;
}

inline nn::Checkpoint<double> jittered_checkpoint(const nn::Network<double>& net, std::uint64_t seed) {
  auto ckpt = net.init(seed);
  Rng rng(derive_seed(seed, "jitter"));
  // Move biases and BN affine parameters off their symmetric init values so
  // every gradient path is exercised.
  for (auto& v : ckpt.params) v += 0.05 * rng.normal();
  for (std::size_t i = 0; i < ckpt.bn_stats.size(); ++i)
    ckpt.bn_stats[i] += std::abs(0.01 * rng.normal());
  return ckpt;
}

}  // namespace ulab::testsupport
