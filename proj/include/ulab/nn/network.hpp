#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "ulab/core/error.hpp"
#include "ulab/core/tensor.hpp"
#include "ulab/nn/checkpoint.hpp"
#include "ulab/nn/loss.hpp"
#include "ulab/nn/model_spec.hpp"

namespace ulab::nn {

enum class Mode { train, eval };

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

// Everything the backward pass needs to reproduce the exact gradient of a
// train-mode forward. Discarded after use.
template <typename T>
struct ForwardTrace {
  std::vector<Tensor<T>> acts;  // acts[0] = input, acts[i + 1] = output of layer i
  struct BnBatch {
    std::vector<double> mean, var;  // biased batch statistics, per channel
  };
  std::vector<BnBatch> bn;  // one entry per BN layer, in layout order
  std::vector<T> params;    // parameter snapshot used by the forward
  std::uint64_t spec_hash = 0;
  std::size_t batch = 0;

  const Tensor<T>& logits() const { return acts.back(); }
};

template <typename T>
struct EvalOut {
  Tensor<T> logits;
  std::vector<Tensor<T>> taps;
};

template <typename T>
struct BackwardOut {
  double loss = 0;
  std::vector<T> grad;
};

// Deterministic differentiable network over a fixed layer set. All methods
// are pure with respect to the checkpoint; running-statistic updates are an
// explicit separate step so checkpoints behave as immutable snapshots.
template <typename T>
class Network {
 public:
  explicit Network(ModelSpec spec)
      : spec_(std::move(spec)), layout_(spec_), shapes_(spec_.activation_shapes()),
        spec_hash_(spec_.hash()) {}

  const ModelSpec& spec() const { return spec_; }
  const Layout& layout() const { return layout_; }
  std::uint64_t spec_hash() const { return spec_hash_; }
  std::size_t param_count() const { return layout_.param_count; }

  Checkpoint<T> init(std::uint64_t seed) const { return init_checkpoint<T>(spec_, layout_, seed); }

  // Spec-facing facade. Train mode yields a trace; eval mode only logits.
  std::pair<Tensor<T>, std::optional<ForwardTrace<T>>> forward(const Checkpoint<T>& ckpt,
                                                               const Tensor<T>& batch,
                                                               Mode mode) const {
    if (mode == Mode::train) {
      ForwardTrace<T> tr = forward_train(ckpt, batch);
      Tensor<T> logits = tr.logits();
      return {std::move(logits), std::move(tr)};
    }
    EvalOut<T> out = forward_eval(ckpt, batch, false);
    return {std::move(out.logits), std::nullopt};
  }

  ForwardTrace<T> forward_train(const Checkpoint<T>& ckpt, const Tensor<T>& x) const {
    check_input(ckpt, x);
    ForwardTrace<T> tr;
    tr.spec_hash = spec_hash_;
    tr.params = ckpt.params;
    tr.batch = x.rows();
    tr.acts.reserve(spec_.layers.size() + 1);
    tr.acts.push_back(x);
    tr.bn.resize(layout_.bn.size());
    std::size_t bn_i = 0;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      const auto& l = spec_.layers[i];
      Tensor<T> y = apply_layer(l, i, ckpt, tr.acts.back(),
                                l.kind == LayerKind::batch_norm ? &tr.bn[bn_i] : nullptr);
      if (l.kind == LayerKind::batch_norm) ++bn_i;
      tr.acts.push_back(std::move(y));
    }
    ULAB_CHECK(tr.logits().all_finite(), "non-finite activation in forward pass");
    return tr;
  }

  EvalOut<T> forward_eval(const Checkpoint<T>& ckpt, const Tensor<T>& x, bool want_taps) const {
    check_input(ckpt, x);
    EvalOut<T> out;
    if (want_taps) out.taps.resize(2);
    Tensor<T> cur = x;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      cur = apply_layer(spec_.layers[i], i, ckpt, cur, nullptr);
      if (want_taps) {
        for (int t = 0; t < 2; ++t)
          if (spec_.taps[static_cast<std::size_t>(t)] == static_cast<int>(i))
            out.taps[static_cast<std::size_t>(t)] = cur;
      }
    }
    ULAB_CHECK(cur.all_finite(), "non-finite activation in forward pass");
    out.logits = std::move(cur);
    return out;
  }

  // Commit BN running statistics from a train-mode trace:
  // running <- (1 - momentum) * running + momentum * batch.
  void update_running_stats(Checkpoint<T>& ckpt, const ForwardTrace<T>& tr,
                            double momentum = kBnMomentum) const {
    ULAB_CHECK(tr.spec_hash == ckpt.spec_hash, "trace spec hash does not match checkpoint");
    for (std::size_t b = 0; b < layout_.bn.size(); ++b) {
      const auto& blk = layout_.bn[b];
      for (std::size_t c = 0; c < blk.channels; ++c) {
        T& rm = ckpt.bn_stats[blk.stat_offset + c];
        T& rv = ckpt.bn_stats[blk.stat_offset + blk.channels + c];
        rm = static_cast<T>((1.0 - momentum) * rm + momentum * tr.bn[b].mean[c]);
        rv = static_cast<T>((1.0 - momentum) * rv + momentum * tr.bn[b].var[c]);
      }
    }
  }

  BackwardOut<T> backward(const ForwardTrace<T>& tr, const LossSpec<T>& terms) const {
    ULAB_CHECK(tr.spec_hash == spec_hash_, "trace spec hash does not match network");
    ULAB_CHECK(!tr.acts.empty() && tr.params.size() == layout_.param_count,
               "backward requires a trace from a train-mode forward");
    const std::size_t n = tr.batch;
    const auto c = static_cast<std::size_t>(spec_.classes);

    BackwardOut<T> out;
    out.grad.assign(layout_.param_count, T(0));
    Tensor<T> d_logits = Tensor<T>::zeros({n, c});
    std::vector<Tensor<T>> tap_grads(2);

    Tensor<T> probs;  // softmax of current logits, computed on demand
    auto ensure_probs = [&] {
      if (probs.size() == 0) probs = softmax(tr.logits());
    };

    for (const auto& term : terms) {
      const double w = term.weight;
      switch (term.kind) {
        case LossKind::cross_entropy: {
          ULAB_CHECK(term.labels.size() == n, "cross-entropy targets do not match batch");
          ensure_probs();
          double acc = 0;
          for (std::size_t r = 0; r < n; ++r) {
            const int y = term.labels[r];
            ULAB_CHECK(y >= 0 && y < spec_.classes, "label out of range");
            const T* p = probs.row(r);
            acc -= std::log(std::max(static_cast<double>(p[static_cast<std::size_t>(y)]), 1e-30));
            T* d = d_logits.row(r);
            for (std::size_t j = 0; j < c; ++j)
              d[j] += static_cast<T>(w * (static_cast<double>(p[j]) - (static_cast<int>(j) == y ? 1.0 : 0.0)) /
                                     static_cast<double>(n));
          }
          out.loss += w * acc / static_cast<double>(n);
          break;
        }
        case LossKind::kl_to_reference: {
          ULAB_CHECK(term.ref_logits.rows() == n && term.ref_logits.row_size() == c,
                     "reference logits do not match batch");
          ULAB_CHECK(term.temperature > 0, "distillation temperature must be positive");
          const double temp = term.temperature;
          auto scaled = [&](const Tensor<T>& z) {
            if (temp == 1.0) return softmax(z);
            Tensor<T> s = z;
            for (auto& v : s.data) v = static_cast<T>(static_cast<double>(v) / temp);
            return softmax(s);
          };
          Tensor<T> ref = scaled(term.ref_logits);
          Tensor<T> cur = scaled(tr.logits());
          double acc = 0;
          for (std::size_t r = 0; r < n; ++r) {
            const T* t = ref.row(r);
            const T* p = cur.row(r);
            T* d = d_logits.row(r);
            for (std::size_t j = 0; j < c; ++j) {
              const double tj = t[j], pj = std::max(static_cast<double>(p[j]), 1e-30);
              if (tj > 0) acc += tj * (std::log(tj) - std::log(pj));
              d[j] += static_cast<T>(w * (static_cast<double>(p[j]) - tj) /
                                     (static_cast<double>(n) * temp));
            }
          }
          out.loss += w * acc / static_cast<double>(n);
          break;
        }
        case LossKind::entropy: {
          ensure_probs();
          double acc = 0;
          for (std::size_t r = 0; r < n; ++r) {
            const T* p = probs.row(r);
            double h = 0;
            for (std::size_t j = 0; j < c; ++j) {
              const double pj = static_cast<double>(p[j]);
              if (pj > 1e-30) h -= pj * std::log(pj);
            }
            acc += h;
            T* d = d_logits.row(r);
            for (std::size_t j = 0; j < c; ++j) {
              const double pj = static_cast<double>(p[j]);
              const double lp = pj > 1e-30 ? std::log(pj) : -69.0;
              d[j] += static_cast<T>(w * (-pj * (lp + h)) / static_cast<double>(n));
            }
          }
          out.loss += w * acc / static_cast<double>(n);
          break;
        }
        case LossKind::cosine_representation:
        case LossKind::euclidean_representation:
          accumulate_representation_term(tr, term, n, tap_grads, out.loss);
          break;
      }
    }

    // Backward walk; inject tap gradients where the taps hang off the stack.
    Tensor<T> d = std::move(d_logits);
    std::size_t bn_i = layout_.bn.size();
    for (int i = static_cast<int>(spec_.layers.size()) - 1; i >= 0; --i) {
      for (int t = 0; t < 2; ++t) {
        if (spec_.taps[static_cast<std::size_t>(t)] == i &&
            tap_grads[static_cast<std::size_t>(t)].size() > 0) {
          auto& g = tap_grads[static_cast<std::size_t>(t)];
          for (std::size_t k = 0; k < d.size(); ++k) d.data[k] += g.data[k];
        }
      }
      const auto& l = spec_.layers[static_cast<std::size_t>(i)];
      if (l.kind == LayerKind::batch_norm) --bn_i;
      d = layer_backward(l, static_cast<std::size_t>(i), tr, d,
                         l.kind == LayerKind::batch_norm ? &tr.bn[bn_i] : nullptr, out.grad);
    }
    ULAB_CHECK(std::isfinite(out.loss), "non-finite loss");
    return out;
  }

  std::vector<int> predict(const Checkpoint<T>& ckpt, const Tensor<T>& x) const {
    EvalOut<T> out = forward_eval(ckpt, x, false);
    std::vector<int> y(out.logits.rows());
    for (std::size_t r = 0; r < y.size(); ++r)
      y[r] = static_cast<int>(argmax_row(out.logits.row(r), out.logits.row_size()));
    return y;
  }

  // Per-example cross-entropy in eval mode (used by MIA and divergence checks).
  std::vector<double> per_example_ce(const Checkpoint<T>& ckpt, const Tensor<T>& x,
                                     const std::vector<int>& labels) const {
    EvalOut<T> out = forward_eval(ckpt, x, false);
    Tensor<T> p = softmax(out.logits);
    std::vector<double> losses(x.rows());
    for (std::size_t r = 0; r < losses.size(); ++r) {
      const int y = labels[r];
      losses[r] = -std::log(std::max(static_cast<double>(p.row(r)[static_cast<std::size_t>(y)]), 1e-30));
    }
    return losses;
  }

 private:
  void check_input(const Checkpoint<T>& ckpt, const Tensor<T>& x) const {
    ULAB_CHECK(ckpt.spec_hash == spec_hash_, "checkpoint spec hash does not match network");
    ULAB_CHECK(ckpt.params.size() == layout_.param_count, "checkpoint parameter length mismatch");
    ULAB_CHECK(x.rows() > 0, "empty batch");
    std::size_t in_flat = 1;
    for (auto dd : spec_.input) in_flat *= dd;
    ULAB_CHECK(x.row_size() == in_flat, "batch shape does not match model input");
  }

  Tensor<T> apply_layer(const LayerDesc& l, std::size_t index, const Checkpoint<T>& ckpt,
                        const Tensor<T>& x, typename ForwardTrace<T>::BnBatch* bn_batch) const {
    const std::size_t n = x.rows();
    const auto& out_shape = shapes_[index + 1];
    switch (l.kind) {
      case LayerKind::dense: {
        const auto in = static_cast<std::size_t>(l.in), outn = static_cast<std::size_t>(l.out);
        const T* w = ckpt.params.data() + block_offset(index, 0);
        const T* b = ckpt.params.data() + block_offset(index, 1);
        Tensor<T> y = Tensor<T>::zeros({n, outn});
        for (std::size_t r = 0; r < n; ++r) {
          const T* xr = x.row(r);
          T* yr = y.row(r);
          for (std::size_t o = 0; o < outn; ++o) {
            const T* wo = w + o * in;
            T acc = b[o];
            for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xr[i];
            yr[o] = acc;
          }
        }
        return y;
      }
      case LayerKind::conv2d: {
        const auto ic = static_cast<std::size_t>(l.in), oc = static_cast<std::size_t>(l.out);
        const auto k = static_cast<std::size_t>(l.kernel);
        const std::size_t h = shapes_[index][1], wdt = shapes_[index][2];
        const int pad = l.kernel / 2;
        const T* ker = ckpt.params.data() + block_offset(index, 0);
        const T* b = ckpt.params.data() + block_offset(index, 1);
        Tensor<T> y = Tensor<T>::zeros({n, oc, h, wdt});
        for (std::size_t r = 0; r < n; ++r) {
          const T* xr = x.row(r);
          T* yr = y.row(r);
          for (std::size_t o = 0; o < oc; ++o) {
            for (std::size_t i = 0; i < h; ++i) {
              for (std::size_t j = 0; j < wdt; ++j) {
                T acc = b[o];
                for (std::size_t ci = 0; ci < ic; ++ci) {
                  for (std::size_t u = 0; u < k; ++u) {
                    const int ii = static_cast<int>(i) + static_cast<int>(u) - pad;
                    if (ii < 0 || ii >= static_cast<int>(h)) continue;
                    for (std::size_t v = 0; v < k; ++v) {
                      const int jj = static_cast<int>(j) + static_cast<int>(v) - pad;
                      if (jj < 0 || jj >= static_cast<int>(wdt)) continue;
                      acc += ker[((o * ic + ci) * k + u) * k + v] *
                             xr[(ci * h + static_cast<std::size_t>(ii)) * wdt +
                                static_cast<std::size_t>(jj)];
                    }
                  }
                }
                yr[(o * h + i) * wdt + j] = acc;
              }
            }
          }
        }
        return y;
      }
      case LayerKind::batch_norm: {
        const auto& blk = layout_.bn_for_layer(static_cast<int>(index));
        const std::size_t ch = blk.channels;
        const std::size_t spatial = spatial_size(shapes_[index]);
        const T* gamma = ckpt.params.data() + blk.gamma_offset;
        const T* beta = ckpt.params.data() + blk.beta_offset;
        Tensor<T> y = Tensor<T>::zeros(prepend_batch(out_shape, n));
        if (bn_batch != nullptr) {
          // train mode: normalize with batch statistics
          bn_batch->mean.assign(ch, 0.0);
          bn_batch->var.assign(ch, 0.0);
          const double cnt = static_cast<double>(n * spatial);
          for (std::size_t r = 0; r < n; ++r) {
            const T* xr = x.row(r);
            for (std::size_t cc = 0; cc < ch; ++cc)
              for (std::size_t s = 0; s < spatial; ++s)
                bn_batch->mean[cc] += static_cast<double>(xr[cc * spatial + s]);
          }
          for (std::size_t cc = 0; cc < ch; ++cc) bn_batch->mean[cc] /= cnt;
          for (std::size_t r = 0; r < n; ++r) {
            const T* xr = x.row(r);
            for (std::size_t cc = 0; cc < ch; ++cc)
              for (std::size_t s = 0; s < spatial; ++s) {
                const double dv = static_cast<double>(xr[cc * spatial + s]) - bn_batch->mean[cc];
                bn_batch->var[cc] += dv * dv;
              }
          }
          for (std::size_t cc = 0; cc < ch; ++cc) bn_batch->var[cc] /= cnt;
          for (std::size_t r = 0; r < n; ++r) {
            const T* xr = x.row(r);
            T* yr = y.row(r);
            for (std::size_t cc = 0; cc < ch; ++cc) {
              const double inv = 1.0 / std::sqrt(bn_batch->var[cc] + kBnEps);
              for (std::size_t s = 0; s < spatial; ++s)
                yr[cc * spatial + s] = static_cast<T>(
                    static_cast<double>(gamma[cc]) *
                        ((static_cast<double>(xr[cc * spatial + s]) - bn_batch->mean[cc]) * inv) +
                    static_cast<double>(beta[cc]));
            }
          }
        } else {
          // eval mode: running statistics
          const T* rmean = ckpt.bn_stats.data() + blk.stat_offset;
          const T* rvar = ckpt.bn_stats.data() + blk.stat_offset + ch;
          for (std::size_t r = 0; r < n; ++r) {
            const T* xr = x.row(r);
            T* yr = y.row(r);
            for (std::size_t cc = 0; cc < ch; ++cc) {
              const double inv = 1.0 / std::sqrt(static_cast<double>(rvar[cc]) + kBnEps);
              for (std::size_t s = 0; s < spatial; ++s)
                yr[cc * spatial + s] = static_cast<T>(
                    static_cast<double>(gamma[cc]) *
                        ((static_cast<double>(xr[cc * spatial + s]) - static_cast<double>(rmean[cc])) * inv) +
                    static_cast<double>(beta[cc]));
            }
          }
        }
        return y;
      }
      case LayerKind::relu: {
        Tensor<T> y = x;
        for (auto& v : y.data) v = std::max(v, T(0));
        return y;
      }
      case LayerKind::avg_pool: {
        const auto w = static_cast<std::size_t>(l.window);
        const std::size_t ch = shapes_[index][0], h = shapes_[index][1], wd = shapes_[index][2];
        const std::size_t oh = h / w, ow = wd / w;
        Tensor<T> y = Tensor<T>::zeros({n, ch, oh, ow});
        const T inv = T(1) / static_cast<T>(w * w);
        for (std::size_t r = 0; r < n; ++r) {
          const T* xr = x.row(r);
          T* yr = y.row(r);
          for (std::size_t cc = 0; cc < ch; ++cc)
            for (std::size_t i = 0; i < oh; ++i)
              for (std::size_t j = 0; j < ow; ++j) {
                T acc = T(0);
                for (std::size_t u = 0; u < w; ++u)
                  for (std::size_t v = 0; v < w; ++v)
                    acc += xr[(cc * h + i * w + u) * wd + j * w + v];
                yr[(cc * oh + i) * ow + j] = acc * inv;
              }
        }
        return y;
      }
    }
    throw Error("unreachable layer kind");
  }

  // Backward of a single layer: consumes dL/d(output), accumulates parameter
  // gradients, returns dL/d(input).
  Tensor<T> layer_backward(const LayerDesc& l, std::size_t index, const ForwardTrace<T>& tr,
                           const Tensor<T>& dout, const typename ForwardTrace<T>::BnBatch* bn_batch,
                           std::vector<T>& grad) const {
    const Tensor<T>& x = tr.acts[index];
    const std::size_t n = x.rows();
    switch (l.kind) {
      case LayerKind::dense: {
        const auto in = static_cast<std::size_t>(l.in), outn = static_cast<std::size_t>(l.out);
        const T* w = tr.params.data() + block_offset(index, 0);
        T* dw = grad.data() + block_offset(index, 0);
        T* db = grad.data() + block_offset(index, 1);
        Tensor<T> dx = Tensor<T>::zeros(x.shape);
        for (std::size_t r = 0; r < n; ++r) {
          const T* xr = x.row(r);
          const T* dr = dout.row(r);
          T* dxr = dx.row(r);
          for (std::size_t o = 0; o < outn; ++o) {
            const T d = dr[o];
            if (d == T(0)) continue;
            db[o] += d;
            T* dwo = dw + o * in;
            const T* wo = w + o * in;
            for (std::size_t i = 0; i < in; ++i) {
              dwo[i] += d * xr[i];
              dxr[i] += d * wo[i];
            }
          }
        }
        return dx;
      }
      case LayerKind::conv2d: {
        const auto ic = static_cast<std::size_t>(l.in), oc = static_cast<std::size_t>(l.out);
        const auto k = static_cast<std::size_t>(l.kernel);
        const std::size_t h = shapes_[index][1], wdt = shapes_[index][2];
        const int pad = l.kernel / 2;
        const T* ker = tr.params.data() + block_offset(index, 0);
        T* dker = grad.data() + block_offset(index, 0);
        T* db = grad.data() + block_offset(index, 1);
        Tensor<T> dx = Tensor<T>::zeros(x.shape);
        for (std::size_t r = 0; r < n; ++r) {
          const T* xr = x.row(r);
          const T* dr = dout.row(r);
          T* dxr = dx.row(r);
          for (std::size_t o = 0; o < oc; ++o) {
            for (std::size_t i = 0; i < h; ++i) {
              for (std::size_t j = 0; j < wdt; ++j) {
                const T d = dr[(o * h + i) * wdt + j];
                if (d == T(0)) continue;
                db[o] += d;
                for (std::size_t ci = 0; ci < ic; ++ci) {
                  for (std::size_t u = 0; u < k; ++u) {
                    const int ii = static_cast<int>(i) + static_cast<int>(u) - pad;
                    if (ii < 0 || ii >= static_cast<int>(h)) continue;
                    for (std::size_t v = 0; v < k; ++v) {
                      const int jj = static_cast<int>(j) + static_cast<int>(v) - pad;
                      if (jj < 0 || jj >= static_cast<int>(wdt)) continue;
                      const std::size_t xi =
                          (ci * h + static_cast<std::size_t>(ii)) * wdt + static_cast<std::size_t>(jj);
                      dker[((o * ic + ci) * k + u) * k + v] += d * xr[xi];
                      dxr[xi] += d * ker[((o * ic + ci) * k + u) * k + v];
                    }
                  }
                }
              }
            }
          }
        }
        return dx;
      }
      case LayerKind::batch_norm: {
        const auto& blk = layout_.bn_for_layer(static_cast<int>(index));
        const std::size_t ch = blk.channels;
        const std::size_t spatial = spatial_size(shapes_[index]);
        const double cnt = static_cast<double>(n * spatial);
        const T* gamma = tr.params.data() + blk.gamma_offset;
        T* dgamma = grad.data() + blk.gamma_offset;
        T* dbeta = grad.data() + blk.beta_offset;
        Tensor<T> dx = Tensor<T>::zeros(x.shape);
        for (std::size_t cc = 0; cc < ch; ++cc) {
          const double mean = bn_batch->mean[cc];
          const double inv = 1.0 / std::sqrt(bn_batch->var[cc] + kBnEps);
          double sum_d = 0, sum_dxhat = 0;
          for (std::size_t r = 0; r < n; ++r) {
            const T* xr = x.row(r);
            const T* dr = dout.row(r);
            for (std::size_t s = 0; s < spatial; ++s) {
              const double xhat = (static_cast<double>(xr[cc * spatial + s]) - mean) * inv;
              const double d = static_cast<double>(dr[cc * spatial + s]);
              sum_d += d;
              sum_dxhat += d * xhat;
            }
          }
          dgamma[cc] += static_cast<T>(sum_dxhat);
          dbeta[cc] += static_cast<T>(sum_d);
          const double g = static_cast<double>(gamma[cc]);
          for (std::size_t r = 0; r < n; ++r) {
            const T* xr = x.row(r);
            const T* dr = dout.row(r);
            T* dxr = dx.row(r);
            for (std::size_t s = 0; s < spatial; ++s) {
              const double xhat = (static_cast<double>(xr[cc * spatial + s]) - mean) * inv;
              const double d = static_cast<double>(dr[cc * spatial + s]);
              dxr[cc * spatial + s] =
                  static_cast<T>(g * inv * (d - sum_d / cnt - xhat * sum_dxhat / cnt));
            }
          }
        }
        return dx;
      }
      case LayerKind::relu: {
        Tensor<T> dx = dout;
        for (std::size_t i = 0; i < dx.size(); ++i)
          if (x.data[i] <= T(0)) dx.data[i] = T(0);
        return dx;
      }
      case LayerKind::avg_pool: {
        const auto w = static_cast<std::size_t>(l.window);
        const std::size_t ch = shapes_[index][0], h = shapes_[index][1], wd = shapes_[index][2];
        const std::size_t oh = h / w, ow = wd / w;
        const T inv = T(1) / static_cast<T>(w * w);
        Tensor<T> dx = Tensor<T>::zeros(x.shape);
        for (std::size_t r = 0; r < n; ++r) {
          const T* dr = dout.row(r);
          T* dxr = dx.row(r);
          for (std::size_t cc = 0; cc < ch; ++cc)
            for (std::size_t i = 0; i < oh; ++i)
              for (std::size_t j = 0; j < ow; ++j) {
                const T d = dr[(cc * oh + i) * ow + j] * inv;
                for (std::size_t u = 0; u < w; ++u)
                  for (std::size_t v = 0; v < w; ++v)
                    dxr[(cc * h + i * w + u) * wd + j * w + v] += d;
              }
        }
        return dx;
      }
    }
    throw Error("unreachable layer kind");
  }

  void accumulate_representation_term(const ForwardTrace<T>& tr, const LossTerm<T>& term,
                                      std::size_t n, std::vector<Tensor<T>>& tap_grads,
                                      double& loss) const {
    ULAB_CHECK(term.ref_taps.size() == 2, "representation term requires one reference per tap");
    const double denom = static_cast<double>(n) * 2.0;
    for (std::size_t t = 0; t < 2; ++t) {
      const int layer = spec_.taps[t];
      const Tensor<T>& r = tr.acts[static_cast<std::size_t>(layer) + 1];
      const Tensor<T>& ref = term.ref_taps[t];
      ULAB_CHECK(ref.size() == r.size() && ref.rows() == n, "reference tap shape mismatch");
      if (tap_grads[t].size() == 0) tap_grads[t] = Tensor<T>::zeros(r.shape);
      Tensor<T>& g = tap_grads[t];
      const std::size_t dim = r.row_size();
      for (std::size_t row = 0; row < n; ++row) {
        const T* rv = r.row(row);
        const T* sv = ref.row(row);
        T* gv = g.row(row);
        if (term.kind == LossKind::euclidean_representation) {
          double acc = 0;
          for (std::size_t j = 0; j < dim; ++j) {
            const double dd = static_cast<double>(rv[j]) - static_cast<double>(sv[j]);
            acc += dd * dd;
            gv[j] += static_cast<T>(term.weight * 2.0 * dd / denom);
          }
          loss += term.weight * acc / denom;
        } else {
          double rr = 0, ss = 0, rs = 0;
          for (std::size_t j = 0; j < dim; ++j) {
            rr += static_cast<double>(rv[j]) * static_cast<double>(rv[j]);
            ss += static_cast<double>(sv[j]) * static_cast<double>(sv[j]);
            rs += static_cast<double>(rv[j]) * static_cast<double>(sv[j]);
          }
          const double nr = std::sqrt(rr), ns = std::sqrt(ss);
          if (nr < 1e-12 || ns < 1e-12) continue;  // degenerate direction: contributes nothing
          const double cos = rs / (nr * ns);
          if (term.rectify && cos <= 0) continue;
          loss += term.weight * cos / denom;
          for (std::size_t j = 0; j < dim; ++j) {
            const double dcos =
                static_cast<double>(sv[j]) / (nr * ns) - cos * static_cast<double>(rv[j]) / rr;
            gv[j] += static_cast<T>(term.weight * dcos / denom);
          }
        }
      }
    }
  }

  static std::vector<std::size_t> prepend_batch(const std::vector<std::size_t>& s, std::size_t n) {
    std::vector<std::size_t> out;
    out.reserve(s.size() + 1);
    out.push_back(n);
    out.insert(out.end(), s.begin(), s.end());
    return out;
  }

  static std::size_t spatial_size(const std::vector<std::size_t>& s) {
    return s.size() == 3 ? s[1] * s[2] : 1;
  }

  // Offset of the nth parameter block of a layer (0 = weights/gamma, 1 = bias/beta).
  std::size_t block_offset(std::size_t layer, int which) const {
    int seen = 0;
    for (const auto& b : layout_.blocks) {
      if (b.layer == static_cast<int>(layer)) {
        if (seen == which) return b.offset;
        ++seen;
      }
    }
    throw Error("parameter block not found");
  }

  ModelSpec spec_;
  Layout layout_;
  std::vector<std::vector<std::size_t>> shapes_;
  std::uint64_t spec_hash_;
};

}  // namespace ulab::nn
