#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ulab/data/audit.hpp"
#include "ulab/data/dataset.hpp"
#include "ulab/train/eval.hpp"
#include "ulab/train/trainer.hpp"

namespace ulab::data {

// Hold-out consistency estimator: train k fold models, each on the dataset
// minus one fold, and score every example by the fraction of the k models
// that classify it correctly. Scores land on the grid {0, 1/k, ..., 1}.
// With a modest fold-training budget, an unduplicated mislabeled example is
// learned by no model and scores 0.
inline TypicalityScores score_typicality_holdout(const nn::Network<float>& net,
                                                 const Dataset& dataset,
                                                 const train::TrainConfig& fold_cfg, int folds,
                                                 std::uint64_t seed,
                                                 AccessAudit* audit = nullptr) {
  ULAB_CHECK(folds >= 3, "typicality estimation needs at least 3 folds");
  const std::size_t n = dataset.size();

  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
  Rng rng(derive_seed(seed, "typicality-folds"));
  rng.shuffle(order);
  std::vector<int> fold_of(n);
  for (std::size_t i = 0; i < n; ++i)
    fold_of[order[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));

  std::vector<int> correct_count(n, 0);
  for (int f = 0; f < folds; ++f) {
    std::vector<std::uint32_t> train_positions;
    train_positions.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i)
      if (fold_of[i] != f) train_positions.push_back(i);
    Dataset fold_train = subset(dataset, train_positions, "fold" + std::to_string(f));

    train::PhaseHooks hooks;
    hooks.phase = "typicality-fold-" + std::to_string(f);
    hooks.audit = audit;
    if (audit != nullptr) audit->allow(hooks.phase, fold_train.ids);
    train::TrainConfig cfg = fold_cfg;
    cfg.seed = derive_seed(seed, "typicality-fold-seed", static_cast<std::uint64_t>(f));
    auto init = net.init(derive_seed(seed, "typicality-fold-init", static_cast<std::uint64_t>(f)));
    auto model = train::fit(net, init, fold_train, cfg, std::move(hooks));

    std::vector<std::uint32_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<std::uint32_t>(i);
    auto batch = gather(dataset, all);
    auto pred = net.predict(model, batch.x);
    for (std::size_t i = 0; i < n; ++i)
      if (pred[i] == dataset.labels[i]) ++correct_count[i];
  }

  TypicalityScores scores;
  scores.method = "holdout_consistency";
  scores.score.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    scores.score[i] = static_cast<float>(correct_count[i]) / static_cast<float>(folds);
  scores.validate(dataset);
  return scores;
}

}  // namespace ulab::data
