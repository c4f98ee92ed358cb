#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "ulab/core/hash.hpp"
#include "ulab/core/rng.hpp"
#include "ulab/data/dataset.hpp"

namespace ulab::data {

enum class ForgetScope { sub_class, class_agnostic };
enum class ForgetTypicality { typical, random_pick, atypical };

inline const char* to_string(ForgetScope s) {
  return s == ForgetScope::sub_class ? "sub_class" : "class_agnostic";
}
inline const char* to_string(ForgetTypicality t) {
  switch (t) {
    case ForgetTypicality::typical: return "typical";
    case ForgetTypicality::random_pick: return "random";
    case ForgetTypicality::atypical: return "atypical";
  }
  return "?";
}

struct ForgetSpec {
  ForgetScope scope = ForgetScope::sub_class;
  int class_id = 0;  // used when scope == sub_class
  ForgetTypicality typicality = ForgetTypicality::atypical;
  double fraction = 0.10;  // of the selection pool
  int count = -1;          // >= 0 overrides fraction
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"scope", to_string(scope)},      {"class_id", class_id},
            {"typicality", to_string(typicality)}, {"fraction", fraction},
            {"count", count},                 {"seed", seed}};
  }
  static ForgetSpec from_json(const nlohmann::json& j);
};

inline ForgetSpec ForgetSpec::from_json(const nlohmann::json& j) {
  ForgetSpec s;
  const std::string scope = j.at("scope").get<std::string>();
  ULAB_CHECK(scope == "sub_class" || scope == "class_agnostic", "unknown forget scope: " + scope);
  s.scope = scope == "sub_class" ? ForgetScope::sub_class : ForgetScope::class_agnostic;
  s.class_id = j.at("class_id").get<int>();
  const std::string typ = j.at("typicality").get<std::string>();
  if (typ == "typical")
    s.typicality = ForgetTypicality::typical;
  else if (typ == "random")
    s.typicality = ForgetTypicality::random_pick;
  else if (typ == "atypical")
    s.typicality = ForgetTypicality::atypical;
  else
    throw Error("unknown forget typicality: " + typ);
  s.fraction = j.at("fraction").get<double>();
  s.count = j.value("count", -1);
  s.seed = j.value("seed", std::uint64_t{0});
  return s;
}

// Train/test data plus the retain / forget / relearn / forget-holdout
// partition, all stored as positions into the owning dataset. Global ids are
// preserved by the subset views, so audit contracts can be expressed in ids.
struct DatasetBundle {
  Dataset train, test;
  TypicalityScores train_scores, test_scores;
  ForgetSpec spec;
  std::uint64_t seed = 0;
  int n_relearn = 0;

  std::vector<std::uint32_t> retain_idx, forget_idx, relearn_idx, forget_ho_idx;  // into train
  std::vector<std::uint32_t> mia_nonmember_pool;                                  // into test

  Dataset retain() const { return subset(train, retain_idx, "retain"); }
  Dataset forget() const { return subset(train, forget_idx, "forget"); }
  Dataset relearn_subset() const { return subset(train, relearn_idx, "relearn"); }
  Dataset forget_holdout() const { return subset(train, forget_ho_idx, "forget_ho"); }

  std::vector<std::uint32_t> ids_at(const std::vector<std::uint32_t>& positions) const {
    std::vector<std::uint32_t> ids;
    ids.reserve(positions.size());
    for (auto p : positions) ids.push_back(train.ids[p]);
    return ids;
  }
  std::vector<std::uint32_t> test_ids() const { return test.ids; }

  void validate() const {
    ULAB_CHECK(retain_idx.size() + forget_idx.size() == train.size(),
               "retain and forget must partition the training set");
    ULAB_CHECK(relearn_idx.size() + forget_ho_idx.size() == forget_idx.size(),
               "relearn subset and holdout must partition the forget set");
    auto sorted = [](std::vector<std::uint32_t> v) {
      std::sort(v.begin(), v.end());
      return v;
    };
    auto r = sorted(retain_idx), f = sorted(forget_idx);
    std::vector<std::uint32_t> inter;
    std::set_intersection(r.begin(), r.end(), f.begin(), f.end(), std::back_inserter(inter));
    ULAB_CHECK(inter.empty(), "retain and forget sets overlap");
    auto re = sorted(relearn_idx), ho = sorted(forget_ho_idx);
    inter.clear();
    std::set_intersection(re.begin(), re.end(), ho.begin(), ho.end(), std::back_inserter(inter));
    ULAB_CHECK(inter.empty(), "relearn subset and forget holdout overlap");
  }

  nlohmann::json manifest() const {
    nlohmann::json j;
    j["forget_spec"] = spec.to_json();
    j["seed"] = seed;
    j["n_relearn"] = n_relearn;
    j["forget_ids"] = ids_at(forget_idx);
    j["relearn_ids"] = ids_at(relearn_idx);
    nlohmann::json pool = nlohmann::json::array();
    for (auto p : mia_nonmember_pool) pool.push_back(test.ids[p]);
    j["mia_nonmember_ids"] = pool;
    return j;
  }
};

namespace detail {

// Stable selection: order the pool by typicality with ascending-id
// tie-breaks, so any strictly increasing transform of the scores selects the
// same examples.
inline std::vector<std::uint32_t> select_forget(const Dataset& train, const TypicalityScores& scores,
                                                const ForgetSpec& spec) {
  std::vector<std::uint32_t> pool;
  for (std::uint32_t i = 0; i < train.size(); ++i) {
    if (spec.scope == ForgetScope::sub_class && train.labels[i] != spec.class_id) continue;
    pool.push_back(i);
  }
  ULAB_CHECK(!pool.empty(), "forget selection pool is empty");
  const std::size_t want = spec.count >= 0
                               ? static_cast<std::size_t>(spec.count)
                               : static_cast<std::size_t>(std::llround(
                                     spec.fraction * static_cast<double>(pool.size())));
  ULAB_CHECK(want > 0, "forget set would be empty");
  ULAB_CHECK(want <= pool.size(), "requested forget count exceeds the selection pool");

  std::vector<std::uint32_t> picked;
  if (spec.typicality == ForgetTypicality::random_pick) {
    Rng rng(derive_seed(spec.seed, "forget-random"));
    auto draws = rng.sample_without_replacement(static_cast<std::uint32_t>(pool.size()),
                                                static_cast<std::uint32_t>(want));
    for (auto d : draws) picked.push_back(pool[d]);
  } else {
    const bool lowest_first = spec.typicality == ForgetTypicality::atypical;
    std::stable_sort(pool.begin(), pool.end(), [&](std::uint32_t a, std::uint32_t b) {
      const float sa = scores.score[a], sb = scores.score[b];
      if (sa != sb) return lowest_first ? sa < sb : sa > sb;
      return train.ids[a] < train.ids[b];
    });
    picked.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(want));
  }
  std::sort(picked.begin(), picked.end(),
            [&](std::uint32_t a, std::uint32_t b) { return train.ids[a] < train.ids[b]; });
  return picked;
}

}  // namespace detail

// Build the full partition. The relearn subset is a seeded uniform draw from
// the forget set; draws are nested across n_relearn values for a fixed seed
// (the shuffled order is computed once, n_relearn takes a prefix).
inline DatasetBundle build_bundle(Dataset train, TypicalityScores train_scores, Dataset test,
                                  TypicalityScores test_scores, const ForgetSpec& spec,
                                  int n_relearn, std::uint64_t seed) {
  train.validate();
  train_scores.validate(train);
  test.validate();
  test_scores.validate(test);
  DatasetBundle b;
  b.spec = spec;
  b.seed = seed;
  b.n_relearn = n_relearn;
  b.forget_idx = detail::select_forget(train, train_scores, spec);
  ULAB_CHECK(n_relearn >= 0 && static_cast<std::size_t>(n_relearn) <= b.forget_idx.size(),
             "n_relearn exceeds the forget set size");

  std::vector<bool> in_forget(train.size(), false);
  for (auto i : b.forget_idx) in_forget[i] = true;
  for (std::uint32_t i = 0; i < train.size(); ++i)
    if (!in_forget[i]) b.retain_idx.push_back(i);

  std::vector<std::uint32_t> order = b.forget_idx;
  Rng rng(derive_seed(seed, "relearn-draw", spec.seed));
  rng.shuffle(order);
  b.relearn_idx.assign(order.begin(), order.begin() + n_relearn);
  b.forget_ho_idx.assign(order.begin() + n_relearn, order.end());
  std::sort(b.relearn_idx.begin(), b.relearn_idx.end());
  std::sort(b.forget_ho_idx.begin(), b.forget_ho_idx.end());

  // MIA non-member pool: test examples matched to the forget population's
  // typicality band (falls back to the whole test split for random scope).
  for (std::uint32_t i = 0; i < test.size(); ++i) {
    const float s = test_scores.score[i];
    bool keep = true;
    if (spec.typicality == ForgetTypicality::atypical) keep = s <= 0.5f;
    if (spec.typicality == ForgetTypicality::typical) keep = s > 0.5f;
    if (keep) b.mia_nonmember_pool.push_back(i);
  }

  b.train = std::move(train);
  b.train_scores = std::move(train_scores);
  b.test = std::move(test);
  b.test_scores = std::move(test_scores);
  b.validate();
  return b;
}

// Rebuild a bundle from datasets plus a manifest (ids only).
inline DatasetBundle rebuild_bundle(Dataset train, TypicalityScores train_scores, Dataset test,
                                    TypicalityScores test_scores, const nlohmann::json& manifest) {
  const ForgetSpec spec = ForgetSpec::from_json(manifest.at("forget_spec"));
  const auto seed = manifest.at("seed").get<std::uint64_t>();
  const int n_relearn = manifest.at("n_relearn").get<int>();
  DatasetBundle b =
      build_bundle(std::move(train), std::move(train_scores), std::move(test),
                   std::move(test_scores), spec, n_relearn, seed);
  // cross-check the reproduced partition against the recorded ids
  const auto expect_forget = manifest.at("forget_ids").get<std::vector<std::uint32_t>>();
  const auto expect_relearn = manifest.at("relearn_ids").get<std::vector<std::uint32_t>>();
  ULAB_CHECK(b.ids_at(b.forget_idx) == expect_forget, "manifest forget ids do not reproduce");
  ULAB_CHECK(b.ids_at(b.relearn_idx) == expect_relearn, "manifest relearn ids do not reproduce");
  return b;
}

}  // namespace ulab::data
