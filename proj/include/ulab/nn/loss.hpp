#pragma once

#include <vector>

#include "ulab/core/tensor.hpp"

namespace ulab::nn {

enum class LossKind {
  cross_entropy,             // integer labels
  kl_to_reference,           // KL(reference || current) on output distributions
  cosine_representation,     // cosine similarity between tap representations and references
  euclidean_representation,  // squared euclidean distance between tap representations and references
  entropy,                   // prediction entropy of the current model
};

// One additive loss component. A full loss is a list of weighted terms; all
// terms are means over the batch (and over taps for representation terms),
// so gradients of different terms compose by simple addition.
template <typename T>
struct LossTerm {
  LossKind kind;
  double weight = 1.0;
  std::vector<int> labels;          // cross_entropy
  Tensor<T> ref_logits;             // kl_to_reference
  std::vector<Tensor<T>> ref_taps;  // representation terms, one tensor per model tap
  bool rectify = false;             // cosine: clamp similarity below 0 to 0
  double temperature = 1.0;         // kl: distillation temperature on both distributions

  static LossTerm ce(std::vector<int> y, double w = 1.0) {
    LossTerm t;
    t.kind = LossKind::cross_entropy;
    t.weight = w;
    t.labels = std::move(y);
    return t;
  }
  static LossTerm kl(Tensor<T> teacher_logits, double w = 1.0, double temp = 1.0) {
    LossTerm t;
    t.kind = LossKind::kl_to_reference;
    t.weight = w;
    t.ref_logits = std::move(teacher_logits);
    t.temperature = temp;
    return t;
  }
  static LossTerm cosine(std::vector<Tensor<T>> refs, double w = 1.0, bool rectified = true) {
    LossTerm t;
    t.kind = LossKind::cosine_representation;
    t.weight = w;
    t.ref_taps = std::move(refs);
    t.rectify = rectified;
    return t;
  }
  static LossTerm euclidean(std::vector<Tensor<T>> refs, double w = 1.0) {
    LossTerm t;
    t.kind = LossKind::euclidean_representation;
    t.weight = w;
    t.ref_taps = std::move(refs);
    return t;
  }
  static LossTerm pred_entropy(double w = 1.0) {
    LossTerm t;
    t.kind = LossKind::entropy;
    t.weight = w;
    return t;
  }
};

template <typename T>
using LossSpec = std::vector<LossTerm<T>>;

}  // namespace ulab::nn
