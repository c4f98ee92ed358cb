#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "ulab/nn/checkpoint.hpp"

namespace ulab::diag {

// Per-method L2 parameter distance from the pretrained model, plus the
// retrain-from-scratch distance as the reference row. BN statistics are
// excluded by l2_param_distance itself.
struct DistanceReport {
  struct Row {
    std::string method;
    double distance;
  };
  std::vector<Row> rows;  // sorted by method id
  double retrain_distance = 0;

  const Row* find(const std::string& method) const {
    for (const auto& r : rows)
      if (r.method == method) return &r;
    return nullptr;
  }
};

inline DistanceReport distance_report(
    const nn::Checkpoint<float>& pretrained,
    const std::vector<std::pair<std::string, const nn::Checkpoint<float>*>>& unlearned,
    const nn::Checkpoint<float>& retrained) {
  DistanceReport rep;
  for (const auto& [method, ckpt] : unlearned)
    rep.rows.push_back({method, nn::l2_param_distance(*ckpt, pretrained)});
  std::sort(rep.rows.begin(), rep.rows.end(),
            [](const auto& a, const auto& b) { return a.method < b.method; });
  rep.retrain_distance = nn::l2_param_distance(retrained, pretrained);
  return rep;
}

}  // namespace ulab::diag
