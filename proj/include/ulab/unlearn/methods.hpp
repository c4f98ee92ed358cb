#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ulab/core/hash.hpp"
#include "ulab/data/bundle.hpp"
#include "ulab/nn/checkpoint.hpp"
#include "ulab/nn/network.hpp"
#include "ulab/train/driver.hpp"
#include "ulab/train/metrics.hpp"
#include "ulab/unlearn/config.hpp"

namespace ulab::unlearn {

struct UnlearnResult {
  nn::Checkpoint<float> ckpt;
  std::vector<train::MetricsRecord> metrics;
  std::int64_t steps = 0;
  double seconds = 0;
  std::uint64_t pretrained_hash = 0;
  double l2_from_pretrained = 0;
  std::vector<std::int64_t> phase_steps;  // per composition phase
};

// Everything a method sees. Methods consume only the pretrained model,
// D_R and D_F; the holdout/relearn identities and the test split are out of
// reach by construction and double-checked by the access audit.
struct MethodContext {
  const nn::Network<float>& net;
  const nn::Checkpoint<float>& pretrained;  // reference model for teachers / distances
  const nn::Checkpoint<float>& start;       // starting point (differs under composition)
  const data::Dataset& retain;
  const data::Dataset& forget;
  const UnlearnConfig& cfg;
  train::PhaseHooks hooks;
  const nn::Checkpoint<float>* safeguard = nullptr;  // tar only
};

namespace detail {

inline train::TrainConfig to_train_config(const UnlearnConfig& c) {
  train::TrainConfig tc;
  tc.lr = c.lr;
  tc.weight_decay = c.weight_decay;
  tc.epochs = c.epochs;
  tc.batch_size = c.batch;
  tc.floor_factor = c.floor_factor;
  tc.seed = c.seed;
  return tc;
}

// Endless batch stream with a fresh shuffle per pass.
class BatchCycler {
 public:
  BatchCycler(std::size_t n, int batch, std::uint64_t seed) : sampler_(n, batch, seed) {
    sampler_.start_epoch(pass_);
  }
  std::vector<std::uint32_t> next() {
    auto b = sampler_.next();
    if (b.empty()) {
      sampler_.start_epoch(++pass_);
      b = sampler_.next();
    }
    return b;
  }

 private:
  train::BatchSampler sampler_;
  int pass_ = 0;
};

inline void add_vec(std::vector<float>& acc, const std::vector<float>& inc) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += inc[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Catastrophic Forgetting (L2), L1-Sparse and plain fine-tuning: retain-set
// cross-entropy plus an optional norm penalty on all trainable parameters.
enum class RegNorm { none, l1, l2 };

inline nn::Checkpoint<float> run_finetune_regularized(MethodContext& ctx, RegNorm norm,
                                                      double coeff) {
  const auto tc = detail::to_train_config(ctx.cfg);
  train::BatchSampler sampler(ctx.retain.size(), tc.batch_size, tc.seed);
  const auto total = static_cast<std::int64_t>(sampler.batches_per_epoch()) * tc.epochs;
  train::TrainDriver driver(ctx.net, ctx.start, tc, total, ctx.hooks);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    sampler.start_epoch(epoch);
    for (auto idx = sampler.next(); !idx.empty(); idx = sampler.next()) {
      auto batch = data::gather(ctx.retain, idx);
      driver.log_train_ids(batch.ids);
      auto trace = ctx.net.forward_train(driver.ckpt(), batch.x);
      auto out = ctx.net.backward(trace, {nn::LossTerm<float>::ce(batch.labels)});
      if (norm != RegNorm::none && coeff > 0) {
        const auto& theta = driver.ckpt().params;
        double penalty = 0;
        for (std::size_t i = 0; i < theta.size(); ++i) {
          const double t = theta[i];
          if (norm == RegNorm::l2) {
            out.grad[i] += static_cast<float>(coeff * t);
            penalty += 0.5 * coeff * t * t;
          } else {
            out.grad[i] += static_cast<float>(coeff * (t > 0 ? 1.0 : (t < 0 ? -1.0 : 0.0)));
            penalty += coeff * std::abs(t);
          }
        }
        out.loss += penalty;
      }
      driver.apply(out.grad, out.loss, {&trace});
    }
  }
  return driver.finish();
}

// ---------------------------------------------------------------------------
// SCRUB: alternate ascent epochs that push the student away from the frozen
// pretrained teacher on the forget set with descent epochs that pin it to
// the teacher on the retain set (KL + cross-entropy).
inline nn::Checkpoint<float> run_scrub(MethodContext& ctx) {
  const double kl_w = ctx.cfg.param("kl_weight", 1.0);
  const double ce_w = ctx.cfg.param("ce_weight", 1.0);
  const double temp = ctx.cfg.param("temperature", 1.0);
  const auto tc = detail::to_train_config(ctx.cfg);

  train::BatchSampler retain_sampler(ctx.retain.size(), tc.batch_size, tc.seed);
  train::BatchSampler forget_sampler(ctx.forget.size(), tc.batch_size,
                                     derive_seed(tc.seed, "scrub-forget"));
  const auto r_steps = static_cast<std::int64_t>(retain_sampler.batches_per_epoch());
  const auto f_steps = static_cast<std::int64_t>(forget_sampler.batches_per_epoch());
  std::int64_t total = 0;
  for (int e = 0; e < tc.epochs; ++e) total += (e % 2 == 0) ? f_steps : r_steps;

  train::TrainDriver driver(ctx.net, ctx.start, tc, total, ctx.hooks);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const bool ascent = epoch % 2 == 0;
    auto& sampler = ascent ? forget_sampler : retain_sampler;
    const auto& dataset = ascent ? ctx.forget : ctx.retain;
    sampler.start_epoch(epoch);
    for (auto idx = sampler.next(); !idx.empty(); idx = sampler.next()) {
      auto batch = data::gather(dataset, idx);
      driver.log_train_ids(batch.ids);
      auto teacher = ctx.net.forward_eval(ctx.pretrained, batch.x, false).logits;
      auto trace = ctx.net.forward_train(driver.ckpt(), batch.x);
      nn::LossSpec<float> loss;
      if (ascent) {
        loss.push_back(nn::LossTerm<float>::kl(std::move(teacher), -kl_w, temp));
      } else {
        loss.push_back(nn::LossTerm<float>::kl(std::move(teacher), kl_w, temp));
        loss.push_back(nn::LossTerm<float>::ce(batch.labels, ce_w));
      }
      auto out = ctx.net.backward(trace, loss);
      driver.apply(out.grad, out.loss, {&trace});
    }
  }
  return driver.finish();
}

// ---------------------------------------------------------------------------
// NegGrad+: 1:1 batch alternation of cross-entropy ascent on the forget set
// and descent on the retain set. Ascent is skipped while the forget batch
// loss sits above the cap.
inline nn::Checkpoint<float> run_neggrad_plus(MethodContext& ctx) {
  const double cap = ctx.cfg.param("ascent_cap", 50.0);
  const auto tc = detail::to_train_config(ctx.cfg);
  train::BatchSampler retain_sampler(ctx.retain.size(), tc.batch_size, tc.seed);
  detail::BatchCycler forget_cycler(ctx.forget.size(), tc.batch_size,
                                    derive_seed(tc.seed, "neggrad-forget"));
  const auto total =
      static_cast<std::int64_t>(retain_sampler.batches_per_epoch()) * tc.epochs * 2;
  train::TrainDriver driver(ctx.net, ctx.start, tc, total, ctx.hooks);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    retain_sampler.start_epoch(epoch);
    for (auto idx = retain_sampler.next(); !idx.empty(); idx = retain_sampler.next()) {
      auto fb = data::gather(ctx.forget, forget_cycler.next());
      driver.log_train_ids(fb.ids);
      auto f_trace = ctx.net.forward_train(driver.ckpt(), fb.x);
      auto probe = ctx.net.backward(f_trace, {nn::LossTerm<float>::ce(fb.labels)});
      if (probe.loss <= cap) {
        auto ascent = ctx.net.backward(f_trace, {nn::LossTerm<float>::ce(fb.labels, -1.0)});
        driver.apply(ascent.grad, ascent.loss, {&f_trace});
      }
      auto rb = data::gather(ctx.retain, idx);
      driver.log_train_ids(rb.ids);
      auto r_trace = ctx.net.forward_train(driver.ckpt(), rb.x);
      auto descent = ctx.net.backward(r_trace, {nn::LossTerm<float>::ce(rb.labels)});
      driver.apply(descent.grad, descent.loss, {&r_trace});
    }
  }
  return driver.finish();
}

// ---------------------------------------------------------------------------
// Circuit Breakers: push forget-set tap representations away from the
// pretrained model (rectified cosine) while anchoring retain-set
// representations (squared euclidean distance). No label terms.
inline nn::Checkpoint<float> run_circuit_breakers(MethodContext& ctx) {
  const double c_forget = ctx.cfg.param("c_forget", 1.0);
  const double c_retain = ctx.cfg.param("c_retain", 1.0);
  const bool rectify = ctx.cfg.param_bool("rectify", true);
  const auto tc = detail::to_train_config(ctx.cfg);
  train::BatchSampler retain_sampler(ctx.retain.size(), tc.batch_size, tc.seed);
  detail::BatchCycler forget_cycler(ctx.forget.size(), tc.batch_size,
                                    derive_seed(tc.seed, "cb-forget"));
  const auto total = static_cast<std::int64_t>(retain_sampler.batches_per_epoch()) * tc.epochs;
  train::TrainDriver driver(ctx.net, ctx.start, tc, total, ctx.hooks);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    retain_sampler.start_epoch(epoch);
    for (auto idx = retain_sampler.next(); !idx.empty(); idx = retain_sampler.next()) {
      auto fb = data::gather(ctx.forget, forget_cycler.next());
      auto rb = data::gather(ctx.retain, idx);
      driver.log_train_ids(fb.ids);
      driver.log_train_ids(rb.ids);
      auto ref_f = ctx.net.forward_eval(ctx.pretrained, fb.x, true).taps;
      auto ref_r = ctx.net.forward_eval(ctx.pretrained, rb.x, true).taps;
      auto f_trace = ctx.net.forward_train(driver.ckpt(), fb.x);
      auto f_out = ctx.net.backward(
          f_trace, {nn::LossTerm<float>::cosine(std::move(ref_f), c_forget, rectify)});
      auto r_trace = ctx.net.forward_train(driver.ckpt(), rb.x);
      auto r_out =
          ctx.net.backward(r_trace, {nn::LossTerm<float>::euclidean(std::move(ref_r), c_retain)});
      detail::add_vec(r_out.grad, f_out.grad);
      driver.apply(r_out.grad, r_out.loss + f_out.loss, {&r_trace, &f_trace});
    }
  }
  return driver.finish();
}

// ---------------------------------------------------------------------------
// SSD: dampen parameters whose forget-set Fisher proxy dominates the
// retain-set proxy, then repair with retain fine-tuning.
inline std::vector<double> fisher_diagonal(const nn::Network<float>& net,
                                           const nn::Checkpoint<float>& ckpt,
                                           const data::Dataset& dataset, int batch_size) {
  std::vector<double> fisher(net.param_count(), 0.0);
  std::size_t batches = 0;
  std::vector<std::uint32_t> idx;
  for (std::size_t start = 0; start < dataset.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min(static_cast<std::size_t>(batch_size), dataset.size() - start);
    if (n < 2) break;  // batch statistics need at least two rows
    idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(start + i);
    auto batch = data::gather(dataset, idx);
    auto trace = net.forward_train(ckpt, batch.x);
    auto out = net.backward(trace, {nn::LossTerm<float>::ce(batch.labels)});
    for (std::size_t i = 0; i < fisher.size(); ++i) {
      const double g = out.grad[i];
      fisher[i] += g * g;
    }
    ++batches;
  }
  ULAB_CHECK(batches > 0, "fisher estimation needs at least one full batch");
  for (auto& f : fisher) f /= static_cast<double>(batches);
  return fisher;
}

inline nn::Checkpoint<float> run_ssd(MethodContext& ctx) {
  const double alpha = ctx.cfg.param("alpha", 10.0);
  const double lambda = ctx.cfg.param("lambda", 1.0);
  const int fisher_batch = static_cast<int>(ctx.cfg.param("fisher_batch", 32));
  auto fisher_r = fisher_diagonal(ctx.net, ctx.start, ctx.retain, fisher_batch);
  auto fisher_f = fisher_diagonal(ctx.net, ctx.start, ctx.forget, fisher_batch);
  if (ctx.hooks.audit != nullptr) {
    ctx.hooks.audit->log_train_access(ctx.hooks.phase, ctx.retain.ids);
    ctx.hooks.audit->log_train_access(ctx.hooks.phase, ctx.forget.ids);
  }

  nn::Checkpoint<float> dampened = ctx.start;
  for (std::size_t i = 0; i < dampened.params.size(); ++i) {
    if (fisher_f[i] > alpha * fisher_r[i] && fisher_f[i] > 0) {
      const double factor = std::min(lambda * fisher_r[i] / fisher_f[i], 1.0);
      dampened.params[i] = static_cast<float>(dampened.params[i] * factor);
    }
  }

  MethodContext repair{ctx.net,    ctx.pretrained, dampened,  ctx.retain,
                       ctx.forget, ctx.cfg,        ctx.hooks, ctx.safeguard};
  return run_finetune_regularized(repair, RegNorm::none, 0.0);
}

// ---------------------------------------------------------------------------
// Random Relabeling: every step trains on retain (true labels) plus forget
// examples whose labels are resampled uniformly at that step.
inline nn::Checkpoint<float> run_random_relabel(MethodContext& ctx) {
  const auto tc = detail::to_train_config(ctx.cfg);
  const std::size_t n_total = ctx.retain.size() + ctx.forget.size();
  train::BatchSampler sampler(n_total, tc.batch_size, tc.seed);
  const auto total = static_cast<std::int64_t>(sampler.batches_per_epoch()) * tc.epochs;
  train::TrainDriver driver(ctx.net, ctx.start, tc, total, ctx.hooks);
  Rng label_rng(derive_seed(tc.seed, "relabel"));
  const auto classes = static_cast<std::uint64_t>(ctx.retain.classes);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    sampler.start_epoch(epoch);
    for (auto idx = sampler.next(); !idx.empty(); idx = sampler.next()) {
      data::Batch batch;
      std::vector<std::size_t> shape = ctx.retain.x.shape;
      shape[0] = idx.size();
      batch.x = Tensor<float>::zeros(shape);
      batch.labels.resize(idx.size());
      batch.ids.resize(idx.size());
      const std::size_t row = ctx.retain.x.row_size();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const std::uint32_t pos = idx[i];
        const bool from_forget = pos >= ctx.retain.size();
        const data::Dataset& src = from_forget ? ctx.forget : ctx.retain;
        const std::uint32_t local =
            from_forget ? pos - static_cast<std::uint32_t>(ctx.retain.size()) : pos;
        std::copy(src.x.row(local), src.x.row(local) + row, batch.x.row(i));
        batch.ids[i] = src.ids[local];
        batch.labels[i] = from_forget ? static_cast<int>(label_rng.below(classes)) : src.labels[local];
      }
      driver.log_train_ids(batch.ids);
      auto trace = ctx.net.forward_train(driver.ckpt(), batch.x);
      auto out = ctx.net.backward(trace, {nn::LossTerm<float>::ce(batch.labels)});
      driver.apply(out.grad, out.loss, {&trace});
    }
  }
  return driver.finish();
}

// ---------------------------------------------------------------------------
// Weight Attenuation / Dropout / Distortion: perturb the weights, then
// repair with plain retain fine-tuning.
inline nn::Checkpoint<float> run_perturb_then_finetune(MethodContext& ctx, nn::PerturbKind kind,
                                                       double default_magnitude) {
  const double magnitude = ctx.cfg.param("magnitude", default_magnitude);
  const bool weights_only = ctx.cfg.param_bool("weights_only", false);
  nn::Checkpoint<float> start = nn::perturb(ctx.start, ctx.net.layout(), kind, magnitude,
                                            derive_seed(ctx.cfg.seed, "perturb"), weights_only);
  MethodContext shifted{ctx.net,   ctx.pretrained, start,     ctx.retain,
                        ctx.forget, ctx.cfg,        ctx.hooks, ctx.safeguard};
  return run_finetune_regularized(shifted, RegNorm::none, 0.0);
}

// ---------------------------------------------------------------------------
// Weight Dist Reg: retain cross-entropy while maximizing the (normalized)
// euclidean distance to the pretrained parameters. At the pretrained point
// itself the distance gradient is defined as zero.
inline nn::Checkpoint<float> run_weight_dist_reg(MethodContext& ctx) {
  const double lambda = ctx.cfg.param("lambda", 0.01);
  ULAB_CHECK(lambda > 0, "weight_dist_reg requires lambda > 0");
  const bool normalized = ctx.cfg.param_bool("normalized", true);
  const double scale =
      normalized ? lambda / std::sqrt(static_cast<double>(ctx.net.param_count())) : lambda;
  const auto tc = detail::to_train_config(ctx.cfg);
  train::BatchSampler sampler(ctx.retain.size(), tc.batch_size, tc.seed);
  const auto total = static_cast<std::int64_t>(sampler.batches_per_epoch()) * tc.epochs;
  train::TrainDriver driver(ctx.net, ctx.start, tc, total, ctx.hooks);
  const auto& theta_pre = ctx.pretrained.params;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    sampler.start_epoch(epoch);
    for (auto idx = sampler.next(); !idx.empty(); idx = sampler.next()) {
      auto batch = data::gather(ctx.retain, idx);
      driver.log_train_ids(batch.ids);
      auto trace = ctx.net.forward_train(driver.ckpt(), batch.x);
      auto out = ctx.net.backward(trace, {nn::LossTerm<float>::ce(batch.labels)});
      const auto& theta = driver.ckpt().params;
      double dist = 0;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double d = static_cast<double>(theta[i]) - static_cast<double>(theta_pre[i]);
        dist += d * d;
      }
      dist = std::sqrt(dist);
      if (dist > 1e-12) {
        for (std::size_t i = 0; i < theta.size(); ++i) {
          const double d = static_cast<double>(theta[i]) - static_cast<double>(theta_pre[i]);
          out.grad[i] -= static_cast<float>(scale * d / dist);
        }
        out.loss -= scale * dist;
      }
      driver.apply(out.grad, out.loss, {&trace});
    }
  }
  return driver.finish();
}

// ---------------------------------------------------------------------------
// CBFT: retain cross-entropy descent while maximizing the loss at the
// midpoint between the current and the pretrained parameters on retain and
// forget examples. The midpoint term is skipped whenever its loss exceeds
// the cap; the gradient through the midpoint carries the chain factor 1/2.
inline nn::Checkpoint<float> run_cbft(MethodContext& ctx) {
  const double lambda_mid = ctx.cfg.param("lambda_mid", 0.001);
  const double cap = ctx.cfg.param("loss_cap", 50.0);
  const auto tc = detail::to_train_config(ctx.cfg);
  train::BatchSampler sampler(ctx.retain.size(), tc.batch_size, tc.seed);
  const std::size_t n_total = ctx.retain.size() + ctx.forget.size();
  detail::BatchCycler mixed_cycler(n_total, tc.batch_size, derive_seed(tc.seed, "cbft-mixed"));
  const auto total = static_cast<std::int64_t>(sampler.batches_per_epoch()) * tc.epochs;
  train::TrainDriver driver(ctx.net, ctx.start, tc, total, ctx.hooks);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    sampler.start_epoch(epoch);
    for (auto idx = sampler.next(); !idx.empty(); idx = sampler.next()) {
      auto batch = data::gather(ctx.retain, idx);
      driver.log_train_ids(batch.ids);
      auto trace = ctx.net.forward_train(driver.ckpt(), batch.x);
      auto out = ctx.net.backward(trace, {nn::LossTerm<float>::ce(batch.labels)});

      // midpoint model on a mixed retain+forget batch
      auto mixed_positions = mixed_cycler.next();
      data::Batch mb;
      {
        std::vector<std::uint32_t> retain_rows, forget_rows;
        for (auto p : mixed_positions) {
          if (p < ctx.retain.size())
            retain_rows.push_back(p);
          else
            forget_rows.push_back(p - static_cast<std::uint32_t>(ctx.retain.size()));
        }
        auto rpart = data::gather(ctx.retain, retain_rows);
        auto fpart = data::gather(ctx.forget, forget_rows);
        std::vector<std::size_t> shape = rpart.x.shape;
        shape[0] = mixed_positions.size();
        mb.x = Tensor<float>::zeros(shape);
        const std::size_t row = mb.x.row_size();
        std::copy(rpart.x.data.begin(), rpart.x.data.end(), mb.x.data.begin());
        std::copy(fpart.x.data.begin(), fpart.x.data.end(),
                  mb.x.data.begin() + static_cast<std::ptrdiff_t>(rpart.x.data.size()));
        (void)row;
        mb.labels = rpart.labels;
        mb.labels.insert(mb.labels.end(), fpart.labels.begin(), fpart.labels.end());
        mb.ids = rpart.ids;
        mb.ids.insert(mb.ids.end(), fpart.ids.begin(), fpart.ids.end());
      }
      driver.log_train_ids(mb.ids);
      if (mb.labels.size() >= 2) {
        nn::Checkpoint<float> midpoint = driver.ckpt();
        for (std::size_t i = 0; i < midpoint.params.size(); ++i)
          midpoint.params[i] =
              0.5f * (midpoint.params[i] + ctx.pretrained.params[i]);
        auto mid_trace = ctx.net.forward_train(midpoint, mb.x);
        auto mid_out = ctx.net.backward(mid_trace, {nn::LossTerm<float>::ce(mb.labels)});
        if (mid_out.loss <= cap) {
          for (std::size_t i = 0; i < out.grad.size(); ++i)
            out.grad[i] -= static_cast<float>(lambda_mid * 0.5 * mid_out.grad[i]);
          out.loss -= lambda_mid * mid_out.loss;
        }
      }
      driver.apply(out.grad, out.loss, {&trace});
    }
  }
  return driver.finish();
}

// ---------------------------------------------------------------------------
// TAR: starts from an already-unlearned safeguard. Each outer step simulates
// a first-order adversary (K retain fine-tune steps), maximizes prediction
// entropy on the forget set at the adapted parameters, and aligns tap
// representations on the retain set with the safeguard.
inline nn::Checkpoint<float> run_tar(MethodContext& ctx) {
  ULAB_CHECK(ctx.safeguard != nullptr, "tar requires an initial safeguard checkpoint");
  const int inner_steps = static_cast<int>(ctx.cfg.param("inner_steps", 4.0));
  const double inner_lr = ctx.cfg.param("inner_lr", ctx.cfg.lr);
  const double lambda_align = ctx.cfg.param("lambda_align", 1.0);
  const double lambda_entropy = ctx.cfg.param("lambda_entropy", 1.0);
  ULAB_CHECK(inner_steps >= 0, "tar inner_steps must be non-negative");

  const auto tc = detail::to_train_config(ctx.cfg);
  train::BatchSampler sampler(ctx.retain.size(), tc.batch_size, tc.seed);
  detail::BatchCycler inner_cycler(ctx.retain.size(), tc.batch_size,
                                   derive_seed(tc.seed, "tar-inner"));
  detail::BatchCycler forget_cycler(ctx.forget.size(), tc.batch_size,
                                    derive_seed(tc.seed, "tar-forget"));
  const auto total = static_cast<std::int64_t>(sampler.batches_per_epoch()) * tc.epochs;
  train::TrainDriver driver(ctx.net, *ctx.safeguard, tc, total, ctx.hooks);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    sampler.start_epoch(epoch);
    for (auto idx = sampler.next(); !idx.empty(); idx = sampler.next()) {
      // simulated adversary: K plain-SGD retain steps from the current point
      nn::Checkpoint<float> adapted = driver.ckpt();
      for (int k = 0; k < inner_steps; ++k) {
        auto ib = data::gather(ctx.retain, inner_cycler.next());
        driver.log_train_ids(ib.ids);
        auto tr = ctx.net.forward_train(adapted, ib.x);
        auto g = ctx.net.backward(tr, {nn::LossTerm<float>::ce(ib.labels)});
        for (std::size_t i = 0; i < adapted.params.size(); ++i)
          adapted.params[i] -= static_cast<float>(inner_lr * g.grad[i]);
      }
      // entropy of the adapted model on the forget set (maximized); once the
      // batch is within 5% of the uniform maximum the term is dropped so the
      // adaptive optimizer cannot keep amplifying a vanishing gradient
      auto fb = data::gather(ctx.forget, forget_cycler.next());
      driver.log_train_ids(fb.ids);
      auto f_trace = ctx.net.forward_train(adapted, fb.x);
      nn::BackwardOut<float> ent;
      ent.grad.assign(ctx.net.param_count(), 0.0f);
      const double max_entropy = std::log(static_cast<double>(ctx.retain.classes));
      double mean_entropy = 0;
      {
        auto probs = softmax(f_trace.logits());
        for (std::size_t r = 0; r < probs.rows(); ++r) {
          const float* p = probs.row(r);
          for (std::size_t j = 0; j < probs.row_size(); ++j)
            if (p[j] > 1e-30f) mean_entropy -= p[j] * std::log(static_cast<double>(p[j]));
        }
        mean_entropy /= static_cast<double>(probs.rows());
      }
      if (lambda_entropy > 0 && mean_entropy < 0.95 * max_entropy)
        ent = ctx.net.backward(f_trace, {nn::LossTerm<float>::pred_entropy(-lambda_entropy)});
      // representation alignment with the safeguard on the retain set
      auto rb = data::gather(ctx.retain, idx);
      driver.log_train_ids(rb.ids);
      auto ref = ctx.net.forward_eval(*ctx.safeguard, rb.x, true).taps;
      auto r_trace = ctx.net.forward_train(driver.ckpt(), rb.x);
      auto align = ctx.net.backward(
          r_trace, {nn::LossTerm<float>::euclidean(std::move(ref), lambda_align)});
      detail::add_vec(align.grad, ent.grad);
      driver.apply(align.grad, align.loss + ent.loss, {&r_trace});
    }
  }
  return driver.finish();
}

// ---------------------------------------------------------------------------
// Registry and dispatch.

inline const std::map<std::string, std::set<std::string>>& method_param_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"finetune", {}},
      {"catastrophic_forgetting", {"coeff"}},
      {"l1_sparse", {"coeff"}},
      {"scrub", {"kl_weight", "ce_weight", "temperature"}},
      {"neggrad_plus", {"ascent_cap"}},
      {"circuit_breakers", {"c_forget", "c_retain", "rectify"}},
      {"ssd", {"alpha", "lambda", "fisher_batch"}},
      {"random_relabel", {}},
      {"weight_attenuation", {"magnitude", "weights_only"}},
      {"weight_dropout", {"magnitude", "weights_only"}},
      {"weight_distortion", {"magnitude", "weights_only"}},
      {"weight_dist_reg", {"lambda", "normalized"}},
      {"cbft", {"lambda_mid", "loss_cap"}},
      {"tar", {"inner_steps", "inner_lr", "lambda_align", "lambda_entropy", "safeguard"}},
  };
  return keys;
}

inline std::vector<std::string> method_ids() {
  std::vector<std::string> ids;
  for (const auto& [k, v] : method_param_keys()) ids.push_back(k);
  return ids;
}

inline nn::Checkpoint<float> dispatch_method(MethodContext& ctx) {
  const std::string& m = ctx.cfg.method;
  if (m == "finetune") return run_finetune_regularized(ctx, RegNorm::none, 0.0);
  if (m == "catastrophic_forgetting")
    return run_finetune_regularized(ctx, RegNorm::l2, ctx.cfg.param("coeff", 0.001));
  if (m == "l1_sparse")
    return run_finetune_regularized(ctx, RegNorm::l1, ctx.cfg.param("coeff", 0.001));
  if (m == "scrub") return run_scrub(ctx);
  if (m == "neggrad_plus") return run_neggrad_plus(ctx);
  if (m == "circuit_breakers") return run_circuit_breakers(ctx);
  if (m == "ssd") return run_ssd(ctx);
  if (m == "random_relabel") return run_random_relabel(ctx);
  if (m == "weight_attenuation")
    return run_perturb_then_finetune(ctx, nn::PerturbKind::attenuate, 0.5);
  if (m == "weight_dropout") return run_perturb_then_finetune(ctx, nn::PerturbKind::dropout, 0.2);
  if (m == "weight_distortion")
    return run_perturb_then_finetune(ctx, nn::PerturbKind::gaussian, 0.02);
  if (m == "weight_dist_reg") return run_weight_dist_reg(ctx);
  if (m == "cbft") return run_cbft(ctx);
  if (m == "tar") return run_tar(ctx);
  throw ConfigError("unknown unlearning method: " + m);
}

// Uniform entry point. Consumes only (pretrained, D_R, D_F, cfg); with
// epochs == 0 every method is the identity on its starting checkpoint.
inline UnlearnResult run_unlearn(const nn::Network<float>& net,
                                 const nn::Checkpoint<float>& pretrained,
                                 const data::DatasetBundle& bundle, const UnlearnConfig& cfg,
                                 train::PhaseHooks hooks,
                                 const nn::Checkpoint<float>* safeguard = nullptr,
                                 const nn::Checkpoint<float>* start = nullptr) {
  const auto it = method_param_keys().find(cfg.method);
  ULAB_CHECK(it != method_param_keys().end(), "unknown unlearning method: " + cfg.method);
  cfg.check_param_keys(it->second);
  ULAB_CHECK(pretrained.spec_hash == net.spec_hash(), "pretrained checkpoint spec mismatch");

  const auto t0 = std::chrono::steady_clock::now();
  UnlearnResult result;
  result.pretrained_hash = nn::content_hash(pretrained);

  const data::Dataset retain = bundle.retain();
  const data::Dataset forget = bundle.forget();
  if (hooks.audit != nullptr) {
    auto allowed = bundle.ids_at(bundle.retain_idx);
    const auto forget_ids = bundle.ids_at(bundle.forget_idx);
    allowed.insert(allowed.end(), forget_ids.begin(), forget_ids.end());
    hooks.audit->allow(hooks.phase, std::move(allowed));
  }
  hooks.metrics = &result.metrics;

  const nn::Checkpoint<float>& begin = start != nullptr ? *start : pretrained;
  if (cfg.epochs == 0) {
    result.ckpt = begin;
  } else {
    MethodContext ctx{net, pretrained, begin, retain, forget, cfg, hooks, safeguard};
    result.ckpt = dispatch_method(ctx);
  }
  result.steps = static_cast<std::int64_t>(result.ckpt.step_count - begin.step_count);
  result.phase_steps = {result.steps};
  result.l2_from_pretrained = nn::l2_param_distance(result.ckpt, pretrained);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// Two-phase composition: the second method starts from the first's output;
// a tar second phase also uses that output as its safeguard. Step budgets
// are accounted per phase.
inline UnlearnResult compose_two_phase(const nn::Network<float>& net,
                                       const nn::Checkpoint<float>& pretrained,
                                       const data::DatasetBundle& bundle,
                                       const UnlearnConfig& first, const UnlearnConfig& second,
                                       train::PhaseHooks hooks,
                                       const nn::Checkpoint<float>* first_safeguard = nullptr) {
  train::PhaseHooks h1 = hooks;
  h1.phase = hooks.phase + ":phase1[" + first.method + "]";
  auto r1 = run_unlearn(net, pretrained, bundle, first, h1, first_safeguard);

  train::PhaseHooks h2 = hooks;
  h2.phase = hooks.phase + ":phase2[" + second.method + "]";
  auto r2 = run_unlearn(net, pretrained, bundle, second, h2, &r1.ckpt, &r1.ckpt);

  UnlearnResult out;
  out.ckpt = std::move(r2.ckpt);
  out.metrics = std::move(r1.metrics);
  out.metrics.insert(out.metrics.end(), r2.metrics.begin(), r2.metrics.end());
  out.steps = r1.steps + r2.steps;
  out.phase_steps = {r1.steps, r2.steps};
  out.seconds = r1.seconds + r2.seconds;
  out.pretrained_hash = r1.pretrained_hash;
  out.l2_from_pretrained = nn::l2_param_distance(out.ckpt, pretrained);
  return out;
}

}  // namespace ulab::unlearn
