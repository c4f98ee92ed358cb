#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "ulab/core/rng.hpp"
#include "ulab/data/bundle.hpp"
#include "ulab/train/eval.hpp"

namespace ulab::attack {

struct MiaReport {
  double threshold = 0;
  int direction = 1;  // +1: member if loss > threshold; -1: member if loss < threshold
  double balanced_accuracy = 0.5;
  std::size_t n_member = 0;
  std::size_t n_nonmember = 0;
  bool degenerate = false;
};

// Balanced loss-threshold classifier. Candidate thresholds are the midpoints
// between adjacent sorted loss values; both directions are tried and the
// best balanced accuracy is reported. Depends only on the ordering of the
// losses, so any strictly increasing transform leaves the report unchanged.
inline MiaReport mia_from_losses(const std::vector<double>& member,
                                 const std::vector<double>& nonmember) {
  MiaReport rep;
  rep.n_member = member.size();
  rep.n_nonmember = nonmember.size();
  ULAB_CHECK(!member.empty() && !nonmember.empty(), "MIA populations must be non-empty");

  std::vector<double> pooled = member;
  pooled.insert(pooled.end(), nonmember.begin(), nonmember.end());
  std::sort(pooled.begin(), pooled.end());
  std::vector<double> thresholds;
  for (std::size_t i = 0; i + 1 < pooled.size(); ++i)
    if (pooled[i] < pooled[i + 1]) thresholds.push_back(0.5 * (pooled[i] + pooled[i + 1]));
  if (thresholds.empty()) {  // constant losses: indistinguishable populations
    rep.degenerate = true;
    rep.balanced_accuracy = 0.5;
    rep.threshold = pooled.front();
    return rep;
  }

  double best = -1, best_t = 0;
  int best_dir = 1;
  for (double t : thresholds) {
    std::size_t m_above = 0, nm_above = 0;
    for (double v : member) m_above += v > t ? 1 : 0;
    for (double v : nonmember) nm_above += v > t ? 1 : 0;
    const double tpr_hi = static_cast<double>(m_above) / static_cast<double>(member.size());
    const double tnr_hi =
        1.0 - static_cast<double>(nm_above) / static_cast<double>(nonmember.size());
    const double acc_hi = 0.5 * (tpr_hi + tnr_hi);
    const double acc_lo = 0.5 * ((1.0 - tpr_hi) + (1.0 - tnr_hi));
    if (acc_hi > best) {
      best = acc_hi;
      best_t = t;
      best_dir = 1;
    }
    if (acc_lo > best) {
      best = acc_lo;
      best_t = t;
      best_dir = -1;
    }
  }
  rep.balanced_accuracy = best;
  rep.threshold = best_t;
  rep.direction = best_dir;
  return rep;
}

// Members are the forget set; non-members are an equal-size seeded subsample
// of the test split drawn from the typicality-matched pool recorded in the
// bundle. Population sizes are equalized by subsampling the larger side.
inline MiaReport mia_balanced_loss_threshold(const nn::Network<float>& net,
                                             const nn::Checkpoint<float>& ckpt,
                                             const data::DatasetBundle& bundle,
                                             std::uint64_t seed) {
  ULAB_CHECK(bundle.forget_idx.size() >= 20, "MIA needs a forget set of at least 20 examples");
  ULAB_CHECK(bundle.test.size() >= 20, "MIA needs a test split of at least 20 examples");
  const auto& pool = bundle.mia_nonmember_pool;
  ULAB_CHECK(!pool.empty(), "MIA non-member pool is empty");

  const std::size_t n = std::min(bundle.forget_idx.size(), pool.size());
  Rng rng(derive_seed(seed, "mia-sample"));

  auto pick = [&rng](const std::vector<std::uint32_t>& from, std::size_t k) {
    if (from.size() == k) return from;
    auto draws = rng.sample_without_replacement(static_cast<std::uint32_t>(from.size()),
                                                static_cast<std::uint32_t>(k));
    std::vector<std::uint32_t> out;
    out.reserve(k);
    for (auto d : draws) out.push_back(from[d]);
    std::sort(out.begin(), out.end());
    return out;
  };
  const auto member_rows = pick(bundle.forget_idx, n);
  const auto nonmember_rows = pick(pool, n);

  const data::Dataset members = data::subset(bundle.train, member_rows, "mia_members");
  const data::Dataset nonmembers = data::subset(bundle.test, nonmember_rows, "mia_nonmembers");
  return mia_from_losses(train::per_example_losses(net, ckpt, members),
                         train::per_example_losses(net, ckpt, nonmembers));
}

}  // namespace ulab::attack
