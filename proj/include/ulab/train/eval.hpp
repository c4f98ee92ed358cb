#pragma once

#include <functional>
#include <vector>

#include "ulab/data/dataset.hpp"
#include "ulab/nn/network.hpp"

namespace ulab::train {

// Eval-mode accuracy, computed in fixed-size batches for cache friendliness.
inline double accuracy(const nn::Network<float>& net, const nn::Checkpoint<float>& ckpt,
                       const data::Dataset& d, std::size_t batch = 256) {
  std::size_t correct = 0;
  std::vector<std::uint32_t> idx(batch);
  for (std::size_t start = 0; start < d.size(); start += batch) {
    const std::size_t n = std::min(batch, d.size() - start);
    for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(start + i);
    auto b = data::gather(d, idx.data(), n);
    auto pred = net.predict(ckpt, b.x);
    for (std::size_t i = 0; i < n; ++i)
      if (pred[i] == b.labels[i]) ++correct;
  }
  return d.size() == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(d.size());
}

inline std::vector<double> per_example_losses(const nn::Network<float>& net,
                                              const nn::Checkpoint<float>& ckpt,
                                              const data::Dataset& d, std::size_t batch = 256) {
  std::vector<double> out;
  out.reserve(d.size());
  std::vector<std::uint32_t> idx(batch);
  for (std::size_t start = 0; start < d.size(); start += batch) {
    const std::size_t n = std::min(batch, d.size() - start);
    for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(start + i);
    auto b = data::gather(d, idx.data(), n);
    auto losses = net.per_example_ce(ckpt, b.x, b.labels);
    out.insert(out.end(), losses.begin(), losses.end());
  }
  return out;
}

// Metric callback used by the step driver: returns (test_acc, forget_ho_acc).
using MetricEval = std::function<std::pair<double, double>(const nn::Checkpoint<float>&)>;

// `test_view` may be a subsample of the test split; `forget_ho` may be null
// for phases without a forget holdout (fold training, quick fits).
inline MetricEval make_metric_eval(const nn::Network<float>& net, const data::Dataset* test_view,
                                   const data::Dataset* forget_ho) {
  return [&net, test_view, forget_ho](const nn::Checkpoint<float>& ckpt) {
    const double t = test_view != nullptr ? accuracy(net, ckpt, *test_view) : 0.0;
    const double f = forget_ho != nullptr ? accuracy(net, ckpt, *forget_ho) : 0.0;
    return std::make_pair(t, f);
  };
}

}  // namespace ulab::train
