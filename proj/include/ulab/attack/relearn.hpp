#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ulab/core/rng.hpp"
#include "ulab/data/bundle.hpp"
#include "ulab/train/trainer.hpp"

namespace ulab::attack {

enum class ReminderSource { retain, heldout_test, corrupted_test };

inline const char* to_string(ReminderSource s) {
  switch (s) {
    case ReminderSource::retain: return "retain";
    case ReminderSource::heldout_test: return "heldout_test";
    case ReminderSource::corrupted_test: return "corrupted_test";
  }
  return "?";
}

inline ReminderSource reminder_source_from(const std::string& s) {
  if (s == "retain") return ReminderSource::retain;
  if (s == "heldout_test") return ReminderSource::heldout_test;
  if (s == "corrupted_test") return ReminderSource::corrupted_test;
  throw ConfigError("unknown reminder source: " + s);
}

struct RelearnConfig {
  int n_relearn = 0;  // must match the bundle's relearn split
  ReminderSource source = ReminderSource::retain;
  double lr = 1e-5;
  int epochs = 10;
  int batch = 64;
  double floor_factor = 0.1;
  std::uint64_t seed = 0;
  double corrupt_sigma = 0.1;  // noise level for the corrupted reminder set
};

struct RelearnOutcome {
  nn::Checkpoint<float> ckpt;
  std::vector<train::MetricsRecord> metrics;
};

// Additive Gaussian noise stand-in for a corrupted reminder set: same
// examples and labels, degraded inputs.
inline data::Dataset corrupt_inputs(const data::Dataset& d, double sigma, std::uint64_t seed) {
  data::Dataset out = d;
  out.provenance = d.provenance + ":corrupted";
  Rng rng(derive_seed(seed, "corrupt"));
  for (auto& v : out.x.data) v = static_cast<float>(v + sigma * rng.normal());
  return out;
}

inline data::Dataset concat(const data::Dataset& a, const data::Dataset& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  ULAB_CHECK(a.x.row_size() == b.x.row_size() && a.classes == b.classes,
             "cannot concatenate datasets with different shapes");
  data::Dataset out = a;
  out.provenance = a.provenance + "+" + b.provenance;
  std::vector<std::size_t> shape = a.x.shape;
  shape[0] = a.size() + b.size();
  out.x = Tensor<float>::zeros(shape);
  std::copy(a.x.data.begin(), a.x.data.end(), out.x.data.begin());
  std::copy(b.x.data.begin(), b.x.data.end(),
            out.x.data.begin() + static_cast<std::ptrdiff_t>(a.x.data.size()));
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.ids.insert(out.ids.end(), b.ids.begin(), b.ids.end());
  return out;
}

// The tampering attack: fine-tune on reminder examples plus the relearn
// subset of the forget set. The forget holdout never enters training; with
// a test-derived reminder the phase contract explicitly covers test ids.
inline RelearnOutcome relearn(const nn::Network<float>& net, const nn::Checkpoint<float>& ckpt,
                              const data::DatasetBundle& bundle, const RelearnConfig& cfg,
                              train::PhaseHooks hooks) {
  ULAB_CHECK(ckpt.spec_hash == net.spec_hash(), "checkpoint spec mismatch");
  ULAB_CHECK(cfg.n_relearn == bundle.n_relearn,
             "relearn config n_relearn does not match the bundle split");

  data::Dataset reminder;
  switch (cfg.source) {
    case ReminderSource::retain: reminder = bundle.retain(); break;
    case ReminderSource::heldout_test: reminder = bundle.test; break;
    case ReminderSource::corrupted_test:
      reminder = corrupt_inputs(bundle.test, cfg.corrupt_sigma, cfg.seed);
      break;
  }
  data::Dataset training = concat(reminder, bundle.relearn_subset());
  ULAB_CHECK(training.size() > 0, "relearn training set is empty");

  if (hooks.audit != nullptr) {
    std::vector<std::uint32_t> allowed = reminder.ids;
    const auto re_ids = bundle.ids_at(bundle.relearn_idx);
    allowed.insert(allowed.end(), re_ids.begin(), re_ids.end());
    hooks.audit->allow(hooks.phase, std::move(allowed));
  }

  train::TrainConfig tc;
  tc.lr = cfg.lr;
  tc.weight_decay = 0.0;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch;
  tc.floor_factor = cfg.floor_factor;
  tc.seed = cfg.seed;

  RelearnOutcome out;
  hooks.metrics = &out.metrics;
  out.ckpt = train::fit(net, ckpt, training, tc, std::move(hooks));
  return out;
}

}  // namespace ulab::attack
