#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ulab/data/audit.hpp"
#include "ulab/nn/network.hpp"
#include "ulab/train/adam.hpp"
#include "ulab/train/eval.hpp"
#include "ulab/train/metrics.hpp"
#include "ulab/train/schedule.hpp"

namespace ulab::train {

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 0.0;  // decoupled, applied outside the adaptive scaling
  int epochs = 1;
  int batch_size = 128;
  double floor_factor = 0.1;
  std::uint64_t seed = 0;
  int eval_every = 10;
  AdamConfig adam;

  void validate() const {
    ULAB_CHECK(lr > 0, "learning rate must be positive");
    ULAB_CHECK(epochs >= 0, "epochs must be non-negative");
    ULAB_CHECK(batch_size >= 1, "batch size must be at least 1");
    ULAB_CHECK(floor_factor > 0 && floor_factor <= 1, "floor factor must lie in (0, 1]");
    ULAB_CHECK(eval_every >= 1, "eval_every must be at least 1");
  }
};

struct PhaseHooks {
  std::string phase = "train";
  MetricEval eval;                             // optional
  std::vector<MetricsRecord>* metrics = nullptr;  // optional sink
  data::AccessAudit* audit = nullptr;             // optional
};

// Owns the optimizer state and the metric cadence for one training phase.
// Loss/gradient construction stays with the caller; the driver applies the
// step (cosine lr, Adam, decoupled weight decay), commits BN running
// statistics from the supplied traces and samples metrics every eval_every
// steps plus the final step.
class TrainDriver {
 public:
  TrainDriver(const nn::Network<float>& net, nn::Checkpoint<float> start, TrainConfig cfg,
              std::int64_t total_steps, PhaseHooks hooks)
      : net_(net), ckpt_(std::move(start)), cfg_(cfg), total_steps_(total_steps),
        hooks_(std::move(hooks)), opt_(OptimState::zeros(ckpt_.params.size())) {
    cfg_.validate();
  }

  double current_lr() const {
    return cosine_lr(step_in_phase_, total_steps_, cfg_.lr, cfg_.floor_factor);
  }

  const nn::Checkpoint<float>& ckpt() const { return ckpt_; }
  std::int64_t steps_done() const { return step_in_phase_; }

  void log_train_ids(const std::vector<std::uint32_t>& ids) {
    if (hooks_.audit != nullptr) hooks_.audit->log_train_access(hooks_.phase, ids);
  }

  // One optimizer step. `traces` are the train-mode forwards of this step
  // whose batch statistics should roll into the running BN statistics.
  void apply(const std::vector<float>& grad, double train_loss,
             std::initializer_list<const nn::ForwardTrace<float>*> traces) {
    if (!std::isfinite(train_loss))
      throw Error(hooks_.phase + ": training diverged (non-finite loss) at step " +
                  std::to_string(step_in_phase_ + 1));
    const double lr = current_lr();
    adam_step(opt_, ckpt_.params, grad, lr, cfg_.weight_decay, cfg_.adam);
    for (float p : ckpt_.params)
      if (!std::isfinite(p))
        throw Error(hooks_.phase + ": training diverged (non-finite parameters) at step " +
                    std::to_string(step_in_phase_ + 1));
    for (const auto* tr : traces)
      if (tr != nullptr) net_.update_running_stats(ckpt_, *tr);
    ++step_in_phase_;
    ++ckpt_.step_count;
    last_loss_ = train_loss;
    last_lr_ = lr;
    if (step_in_phase_ % cfg_.eval_every == 0) record();
  }

  // Emit the final-step record if the last step was off cadence.
  nn::Checkpoint<float> finish() {
    if (step_in_phase_ > 0 && step_in_phase_ % cfg_.eval_every != 0) record();
    return std::move(ckpt_);
  }

 private:
  void record() {
    if (hooks_.metrics == nullptr) return;
    MetricsRecord r;
    r.phase = hooks_.phase;
    r.step = static_cast<std::int64_t>(ckpt_.step_count);
    if (hooks_.eval) {
      auto [t, f] = hooks_.eval(ckpt_);
      r.test_acc = t;
      r.forget_ho_acc = f;
    }
    r.train_loss = last_loss_;
    r.lr = last_lr_;
    hooks_.metrics->push_back(std::move(r));
  }

  const nn::Network<float>& net_;
  nn::Checkpoint<float> ckpt_;
  TrainConfig cfg_;
  std::int64_t total_steps_;
  PhaseHooks hooks_;
  OptimState opt_;
  std::int64_t step_in_phase_ = 0;
  double last_loss_ = 0, last_lr_ = 0;
};

// Seeded epoch shuffling; batches are contiguous slices of the shuffled
// order, the trailing partial batch included.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, int batch_size, std::uint64_t seed)
      : n_(n), batch_(static_cast<std::size_t>(batch_size)), seed_(seed) {
    ULAB_CHECK(n_ > 0, "cannot sample from an empty dataset");
    order_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) order_[i] = static_cast<std::uint32_t>(i);
  }

  std::size_t batches_per_epoch() const { return (n_ + batch_ - 1) / batch_; }

  void start_epoch(int epoch) {
    Rng rng(derive_seed(seed_, "shuffle", static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order_);
    cursor_ = 0;
  }

  // Returns positions for the next batch; empty when the epoch is done.
  std::vector<std::uint32_t> next() {
    if (cursor_ >= n_) return {};
    const std::size_t take = std::min(batch_, n_ - cursor_);
    std::vector<std::uint32_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                   order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + take));
    cursor_ += take;
    return out;
  }

 private:
  std::size_t n_;
  std::size_t batch_;
  std::uint64_t seed_;
  std::vector<std::uint32_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace ulab::train
