#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ulab/data/dataset.hpp"
#include "ulab/nn/checkpoint.hpp"
#include "ulab/train/eval.hpp"

namespace ulab::attack {

// Per-tensor symmetric uniform quantization, round-to-nearest:
// scale = max|w| / (2^(b-1) - 1), w' = round(w / scale) * scale.
// Each parameter block (weight tensor, bias, BN affine) is one tensor.
// All-zero tensors pass through; BN running statistics are never touched.
inline nn::Checkpoint<float> quantize(const nn::Checkpoint<float>& ckpt, const nn::Layout& layout,
                                      int bits) {
  ULAB_CHECK(bits >= 2 && bits <= 32, "quantization bits must lie in [2, 32]");
  nn::Checkpoint<float> out = ckpt;
  const double levels = std::pow(2.0, bits - 1) - 1.0;
  for (const auto& block : layout.blocks) {
    double max_abs = 0;
    for (std::size_t i = 0; i < block.count; ++i)
      max_abs = std::max(max_abs, std::abs(static_cast<double>(ckpt.params[block.offset + i])));
    if (max_abs == 0) continue;  // degenerate scale: identity
    const double scale = max_abs / levels;
    for (std::size_t i = 0; i < block.count; ++i) {
      const double w = static_cast<double>(ckpt.params[block.offset + i]);
      out.params[block.offset + i] = static_cast<float>(std::round(w / scale) * scale);
    }
  }
  return out;
}

struct QuantRow {
  int bits;
  double test_acc;
  double forget_ho_acc;
};

// Evaluate accuracy across bit widths. Degradation is reported as-is; no
// monotonicity is assumed (collapse shows up in the rows).
inline std::vector<QuantRow> quantization_sweep(const nn::Network<float>& net,
                                                const nn::Checkpoint<float>& ckpt,
                                                const std::vector<int>& bits_list,
                                                const data::Dataset& test,
                                                const data::Dataset& forget_ho) {
  std::vector<QuantRow> rows;
  rows.reserve(bits_list.size());
  for (int b : bits_list) {
    auto q = quantize(ckpt, net.layout(), b);
    rows.push_back({b, train::accuracy(net, q, test), train::accuracy(net, q, forget_ho)});
  }
  return rows;
}

}  // namespace ulab::attack
