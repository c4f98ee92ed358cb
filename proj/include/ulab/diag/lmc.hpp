#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "ulab/data/dataset.hpp"
#include "ulab/nn/checkpoint.hpp"
#include "ulab/train/eval.hpp"

namespace ulab::diag {

// Accuracy along the straight line between two checkpoints, parameters and
// BN running statistics both interpolated.
struct LmcCurve {
  std::string a_label, b_label;
  struct Point {
    double alpha;
    double test_acc;
    double forget_acc;
    double retain_acc;
  };
  std::vector<Point> points;
};

inline LmcCurve lmc_curve(const nn::Network<float>& net, const nn::Checkpoint<float>& a,
                          const nn::Checkpoint<float>& b, int n_points,
                          const data::Dataset& test, const data::Dataset& forget,
                          const data::Dataset& retain, std::string a_label = "a",
                          std::string b_label = "b") {
  ULAB_CHECK(n_points >= 3, "an LMC curve needs at least 3 points");
  nn::check_same_spec(a, b);
  LmcCurve curve;
  curve.a_label = std::move(a_label);
  curve.b_label = std::move(b_label);
  for (int i = 0; i < n_points; ++i) {
    const double alpha = static_cast<double>(i) / static_cast<double>(n_points - 1);
    const auto mid = nn::interpolate(a, b, alpha);
    curve.points.push_back({alpha, train::accuracy(net, mid, test),
                            train::accuracy(net, mid, forget),
                            train::accuracy(net, mid, retain)});
  }
  return curve;
}

// Maximum shortfall of the measured test accuracy below the straight chord
// between the endpoint accuracies, clamped at zero. Invariant under
// reversing the curve's direction.
inline double barrier_height(const LmcCurve& curve) {
  ULAB_CHECK(curve.points.size() >= 3, "barrier needs at least 3 curve points");
  const double a0 = curve.points.front().test_acc;
  const double a1 = curve.points.back().test_acc;
  double barrier = 0;
  for (std::size_t i = 1; i + 1 < curve.points.size(); ++i) {
    const auto& p = curve.points[i];
    const double chord = (1.0 - p.alpha) * a0 + p.alpha * a1;
    barrier = std::max(barrier, chord - p.test_acc);
  }
  return barrier;
}

}  // namespace ulab::diag
