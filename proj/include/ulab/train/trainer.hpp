#pragma once

#include <utility>

#include "ulab/data/bundle.hpp"
#include "ulab/data/dataset.hpp"
#include "ulab/train/driver.hpp"

namespace ulab::train {

// Plain cross-entropy training. Deterministic for a fixed (spec, seed, data);
// only the examples in `dataset` are ever read.
inline nn::Checkpoint<float> fit(const nn::Network<float>& net, const nn::Checkpoint<float>& init,
                                 const data::Dataset& dataset, const TrainConfig& cfg,
                                 PhaseHooks hooks = {}) {
  ULAB_CHECK(init.spec_hash == net.spec_hash(), "initial checkpoint does not match the model spec");
  BatchSampler sampler(dataset.size(), cfg.batch_size, cfg.seed);
  const auto total_steps =
      static_cast<std::int64_t>(sampler.batches_per_epoch()) * static_cast<std::int64_t>(cfg.epochs);
  TrainDriver driver(net, init, cfg, total_steps, std::move(hooks));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    sampler.start_epoch(epoch);
    for (auto idx = sampler.next(); !idx.empty(); idx = sampler.next()) {
      auto batch = data::gather(dataset, idx);
      driver.log_train_ids(batch.ids);
      try {
        auto trace = net.forward_train(driver.ckpt(), batch.x);
        auto out = net.backward(trace, {nn::LossTerm<float>::ce(batch.labels)});
        driver.apply(out.grad, out.loss, {&trace});
      } catch (const Error& e) {
        throw Error(std::string(e.what()) + " (step " + std::to_string(driver.steps_done() + 1) +
                    ")");
      }
    }
  }
  return driver.finish();
}

// Gold-standard unlearning: retrain on the retain set from the persisted
// original initialization, with the pretraining recipe.
inline nn::Checkpoint<float> retrain_from_scratch(const nn::Network<float>& net,
                                                  const nn::Checkpoint<float>& init,
                                                  const data::DatasetBundle& bundle,
                                                  const TrainConfig& pretrain_cfg,
                                                  PhaseHooks hooks = {}) {
  ULAB_CHECK(init.step_count == 0, "retrain_from_scratch expects the original initialization");
  const data::Dataset retain = bundle.retain();
  if (hooks.audit != nullptr) hooks.audit->allow(hooks.phase, bundle.ids_at(bundle.retain_idx));
  return fit(net, init, retain, pretrain_cfg, std::move(hooks));
}

}  // namespace ulab::train
