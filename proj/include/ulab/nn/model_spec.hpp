#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ulab/core/error.hpp"
#include "ulab/core/hash.hpp"

namespace ulab::nn {

enum class LayerKind { dense, conv2d, batch_norm, relu, avg_pool };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::relu: return "relu";
    case LayerKind::avg_pool: return "avg_pool";
  }
  return "?";
}

struct LayerDesc {
  LayerKind kind;
  std::string name;
  // dense: in/out features; conv2d: in/out channels + kernel (square, pad = kernel/2);
  // batch_norm: channels; avg_pool: window (stride = window).
  int in = 0;
  int out = 0;
  int kernel = 0;
  int channels = 0;
  int window = 0;
};

// Architecture description. The parameter layout, activation shapes and the
// spec hash are all derived from it, so a checkpoint can be validated
// against the spec that produced it.
struct ModelSpec {
  std::vector<std::size_t> input;  // {features} or {channels, h, w}
  int classes = 0;
  std::vector<LayerDesc> layers;
  std::array<int, 2> taps{-1, -1};  // layer indices whose outputs are representation taps

  std::uint64_t hash() const {
    Fnv1a h;
    h.str("ULSPEC");
    h.u64(input.size());
    for (auto d : input) h.u64(d);
    h.i64(classes);
    h.u64(layers.size());
    for (const auto& l : layers) {
      h.str(layer_kind_name(l.kind)).str(l.name);
      h.i64(l.in).i64(l.out).i64(l.kernel).i64(l.channels).i64(l.window);
    }
    h.i64(taps[0]).i64(taps[1]);
    return h.value();
  }

  // Output shape of each layer (excluding the batch dimension), with
  // composition checks. shapes[0] is the input, shapes[i+1] is layer i's output.
  std::vector<std::vector<std::size_t>> activation_shapes() const {
    std::vector<std::vector<std::size_t>> shapes;
    shapes.push_back(input);
    for (const auto& l : layers) {
      const auto& s = shapes.back();
      std::size_t flat = 1;
      for (auto d : s) flat *= d;
      switch (l.kind) {
        case LayerKind::dense:
          ULAB_CHECK(flat == static_cast<std::size_t>(l.in),
                     "dense layer '" + l.name + "' fan-in does not match incoming shape");
          shapes.push_back({static_cast<std::size_t>(l.out)});
          break;
        case LayerKind::conv2d: {
          ULAB_CHECK(s.size() == 3, "conv layer '" + l.name + "' expects (channels, h, w) input");
          ULAB_CHECK(s[0] == static_cast<std::size_t>(l.in),
                     "conv layer '" + l.name + "' channel mismatch");
          ULAB_CHECK(l.kernel % 2 == 1, "conv kernel must be odd");
          shapes.push_back({static_cast<std::size_t>(l.out), s[1], s[2]});
          break;
        }
        case LayerKind::batch_norm: {
          const std::size_t ch = s.size() == 3 ? s[0] : flat;
          ULAB_CHECK(ch == static_cast<std::size_t>(l.channels),
                     "batch_norm layer '" + l.name + "' channel mismatch");
          shapes.push_back(s);
          break;
        }
        case LayerKind::relu:
          shapes.push_back(s);
          break;
        case LayerKind::avg_pool: {
          ULAB_CHECK(s.size() == 3, "avg_pool expects (channels, h, w) input");
          ULAB_CHECK(l.window > 0 && s[1] % l.window == 0 && s[2] % l.window == 0,
                     "avg_pool window must divide the spatial dims");
          const auto w = static_cast<std::size_t>(l.window);
          shapes.push_back({s[0], s[1] / w, s[2] / w});
          break;
        }
      }
    }
    const auto& last = shapes.back();
    ULAB_CHECK(last.size() == 1 && last[0] == static_cast<std::size_t>(classes),
               "final layer must emit one logit per class");
    for (int t : taps)
      ULAB_CHECK(t >= 0 && t < static_cast<int>(layers.size()), "tap references a missing layer");
    return shapes;
  }
};

// Two hidden dense+BN+ReLU blocks, taps on the block outputs.
inline ModelSpec mlp_tiny(int input_dim, int classes, int width = 64) {
  ModelSpec s;
  s.input = {static_cast<std::size_t>(input_dim)};
  s.classes = classes;
  s.layers = {
      {LayerKind::dense, "fc1", input_dim, width},
      {LayerKind::batch_norm, "bn1", 0, 0, 0, width},
      {LayerKind::relu, "act1"},
      {LayerKind::dense, "fc2", width, width},
      {LayerKind::batch_norm, "bn2", 0, 0, 0, width},
      {LayerKind::relu, "act2"},
      {LayerKind::dense, "head", width, classes},
  };
  s.taps = {2, 5};
  return s;
}

// Two conv+BN+ReLU+pool blocks and a dense head, taps on the pooled block outputs.
inline ModelSpec conv_tiny(int in_channels, int height, int width, int classes) {
  ModelSpec s;
  s.input = {static_cast<std::size_t>(in_channels), static_cast<std::size_t>(height),
             static_cast<std::size_t>(width)};
  s.classes = classes;
  const int flat = 16 * (height / 4) * (width / 4);
  s.layers = {
      {LayerKind::conv2d, "conv1", in_channels, 8, 3},
      {LayerKind::batch_norm, "bn1", 0, 0, 0, 8},
      {LayerKind::relu, "act1"},
      {LayerKind::avg_pool, "pool1", 0, 0, 0, 0, 2},
      {LayerKind::conv2d, "conv2", 8, 16, 3},
      {LayerKind::batch_norm, "bn2", 0, 0, 0, 16},
      {LayerKind::relu, "act2"},
      {LayerKind::avg_pool, "pool2", 0, 0, 0, 0, 2},
      {LayerKind::dense, "fc1", flat, 64},
      {LayerKind::relu, "act3"},
      {LayerKind::dense, "head", 64, classes},
  };
  s.taps = {3, 7};
  return s;
}

}  // namespace ulab::nn
