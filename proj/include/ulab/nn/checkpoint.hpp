#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ulab/core/error.hpp"
#include "ulab/core/hash.hpp"
#include "ulab/core/rng.hpp"
#include "ulab/nn/model_spec.hpp"

namespace ulab::nn {

// Flat parameter layout derived from a ModelSpec. Every trainable block
// (dense/conv weights and biases, BN gamma/beta) gets a contiguous slice of
// the parameter vector; BN running statistics live in a separate vector,
// per layer as [mean..., var...].
struct ParamBlock {
  int layer;
  std::string name;
  bool weight_matrix;  // dense/conv weight tensors (as opposed to biases and BN affine)
  std::size_t offset;
  std::size_t count;
  std::vector<std::size_t> shape;
};

struct BnBlock {
  int layer;
  std::size_t channels;
  std::size_t gamma_offset;  // into params
  std::size_t beta_offset;   // into params
  std::size_t stat_offset;   // into bn_stats; mean at offset, var at offset + channels
};

struct Layout {
  std::vector<ParamBlock> blocks;
  std::vector<BnBlock> bn;
  std::size_t param_count = 0;
  std::size_t bn_stat_count = 0;

  explicit Layout(const ModelSpec& spec) {
    std::size_t p = 0, s = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      const auto& l = spec.layers[i];
      const int li = static_cast<int>(i);
      if (l.kind == LayerKind::dense) {
        const auto w = static_cast<std::size_t>(l.in) * static_cast<std::size_t>(l.out);
        blocks.push_back({li, l.name + ".w", true, p, w,
                          {static_cast<std::size_t>(l.out), static_cast<std::size_t>(l.in)}});
        p += w;
        blocks.push_back({li, l.name + ".b", false, p, static_cast<std::size_t>(l.out),
                          {static_cast<std::size_t>(l.out)}});
        p += static_cast<std::size_t>(l.out);
      } else if (l.kind == LayerKind::conv2d) {
        const auto k = static_cast<std::size_t>(l.kernel);
        const auto w = static_cast<std::size_t>(l.out) * static_cast<std::size_t>(l.in) * k * k;
        blocks.push_back({li, l.name + ".w", true, p, w,
                          {static_cast<std::size_t>(l.out), static_cast<std::size_t>(l.in), k, k}});
        p += w;
        blocks.push_back({li, l.name + ".b", false, p, static_cast<std::size_t>(l.out),
                          {static_cast<std::size_t>(l.out)}});
        p += static_cast<std::size_t>(l.out);
      } else if (l.kind == LayerKind::batch_norm) {
        const auto ch = static_cast<std::size_t>(l.channels);
        BnBlock b;
        b.layer = li;
        b.channels = ch;
        b.gamma_offset = p;
        blocks.push_back({li, l.name + ".gamma", false, p, ch, {ch}});
        p += ch;
        b.beta_offset = p;
        blocks.push_back({li, l.name + ".beta", false, p, ch, {ch}});
        p += ch;
        b.stat_offset = s;
        s += 2 * ch;
        bn.push_back(b);
      }
    }
    param_count = p;
    bn_stat_count = s;
  }

  const BnBlock& bn_for_layer(int layer) const {
    for (const auto& b : bn)
      if (b.layer == layer) return b;
    throw Error("no batch_norm block for layer");
  }
};

template <typename T>
struct Checkpoint {
  std::vector<T> params;
  std::vector<T> bn_stats;
  std::uint64_t spec_hash = 0;
  std::uint64_t step_count = 0;

  template <typename U>
  Checkpoint<U> cast() const {
    Checkpoint<U> out;
    out.params.assign(params.begin(), params.end());
    out.bn_stats.assign(bn_stats.begin(), bn_stats.end());
    out.spec_hash = spec_hash;
    out.step_count = step_count;
    return out;
  }
};

template <typename T>
inline void check_same_spec(const Checkpoint<T>& a, const Checkpoint<T>& b) {
  ULAB_CHECK(a.spec_hash == b.spec_hash, "checkpoint spec hashes do not match");
}

// Kaiming-uniform fan-in init for weight tensors; biases zero, BN affine
// identity, running stats (mean 0, var 1).
template <typename T>
inline Checkpoint<T> init_checkpoint(const ModelSpec& spec, const Layout& layout, std::uint64_t seed) {
  Checkpoint<T> c;
  c.params.assign(layout.param_count, T(0));
  c.bn_stats.assign(layout.bn_stat_count, T(0));
  c.spec_hash = spec.hash();
  Rng rng(derive_seed(seed, "init"));
  for (const auto& b : layout.blocks) {
    if (b.weight_matrix) {
      std::size_t fan_in = 1;
      for (std::size_t i = 1; i < b.shape.size(); ++i) fan_in *= b.shape[i];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (std::size_t i = 0; i < b.count; ++i)
        c.params[b.offset + i] = static_cast<T>(rng.uniform(-bound, bound));
    } else if (b.name.size() >= 6 && b.name.substr(b.name.size() - 6) == ".gamma") {
      for (std::size_t i = 0; i < b.count; ++i) c.params[b.offset + i] = T(1);
    }
  }
  for (const auto& b : layout.bn)
    for (std::size_t i = 0; i < b.channels; ++i) c.bn_stats[b.stat_offset + b.channels + i] = T(1);
  return c;
}

// L2 distance over trainable parameters only; BN running stats are excluded.
template <typename T>
inline double l2_param_distance(const Checkpoint<T>& a, const Checkpoint<T>& b) {
  check_same_spec(a, b);
  ULAB_CHECK(a.params.size() == b.params.size(), "parameter length mismatch");
  double acc = 0;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    const double d = static_cast<double>(a.params[i]) - static_cast<double>(b.params[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

// Linear interpolation of parameters and BN running statistics.
// alpha = 0 and alpha = 1 return exact copies of the endpoints.
template <typename T>
inline Checkpoint<T> interpolate(const Checkpoint<T>& a, const Checkpoint<T>& b, double alpha) {
  check_same_spec(a, b);
  ULAB_CHECK(alpha >= 0.0 && alpha <= 1.0, "interpolation alpha outside [0, 1]");
  if (alpha == 0.0) return a;
  if (alpha == 1.0) return b;
  Checkpoint<T> out = a;
  const T wa = static_cast<T>(1.0 - alpha), wb = static_cast<T>(alpha);
  for (std::size_t i = 0; i < out.params.size(); ++i)
    out.params[i] = wa * a.params[i] + wb * b.params[i];
  for (std::size_t i = 0; i < out.bn_stats.size(); ++i)
    out.bn_stats[i] = wa * a.bn_stats[i] + wb * b.bn_stats[i];
  out.step_count = std::max(a.step_count, b.step_count);
  return out;
}

enum class PerturbKind { attenuate, dropout, gaussian };

// attenuate: multiply every affected parameter by `magnitude`;
// dropout: zero exactly round(magnitude * n) affected parameters, chosen by seed;
// gaussian: add N(0, magnitude^2) noise per affected parameter, by seed.
// BN running statistics are never touched. `weights_only` restricts the
// affected set to dense/conv weight tensors.
template <typename T>
inline Checkpoint<T> perturb(const Checkpoint<T>& ckpt, const Layout& layout, PerturbKind kind,
                             double magnitude, std::uint64_t seed, bool weights_only = false) {
  switch (kind) {
    case PerturbKind::attenuate:
      ULAB_CHECK(magnitude > 0, "attenuation factor must be positive");
      break;
    case PerturbKind::dropout:
      ULAB_CHECK(magnitude >= 0 && magnitude < 1, "dropout fraction must be in [0, 1)");
      break;
    case PerturbKind::gaussian:
      ULAB_CHECK(magnitude >= 0, "gaussian sigma must be non-negative");
      break;
  }
  std::vector<std::size_t> affected;
  affected.reserve(layout.param_count);
  for (const auto& b : layout.blocks) {
    if (weights_only && !b.weight_matrix) continue;
    for (std::size_t i = 0; i < b.count; ++i) affected.push_back(b.offset + i);
  }
  Checkpoint<T> out = ckpt;
  Rng rng(derive_seed(seed, "perturb"));
  switch (kind) {
    case PerturbKind::attenuate:
      for (auto i : affected) out.params[i] = static_cast<T>(out.params[i] * magnitude);
      break;
    case PerturbKind::dropout: {
      const auto n = static_cast<std::uint32_t>(affected.size());
      const auto k = static_cast<std::uint32_t>(std::llround(magnitude * static_cast<double>(n)));
      for (auto pick : rng.sample_without_replacement(n, k)) out.params[affected[pick]] = T(0);
      break;
    }
    case PerturbKind::gaussian:
      if (magnitude > 0)
        for (auto i : affected) out.params[i] = static_cast<T>(out.params[i] + magnitude * rng.normal());
      break;
  }
  return out;
}

template <typename T>
inline std::uint64_t content_hash(const Checkpoint<T>& c) {
  Fnv1a h;
  h.u64(c.spec_hash).u64(c.step_count);
  h.span(c.params).span(c.bn_stats);
  return h.value();
}

}  // namespace ulab::nn
