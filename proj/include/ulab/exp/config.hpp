#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ulab/core/hash.hpp"
#include "ulab/data/bundle.hpp"
#include "ulab/data/synthetic.hpp"
#include "ulab/exp/toml.hpp"
#include "ulab/nn/model_spec.hpp"
#include "ulab/train/driver.hpp"
#include "ulab/unlearn/methods.hpp"

namespace ulab::exp {

inline constexpr const char* kToolVersion = "0.1.0";

struct DatasetBlock {
  std::string kind = "synthetic";  // "synthetic" | "idx"
  data::SyntheticConfig synth;
  int test_per_class = 200;
  std::string images, labels, test_images, test_labels;  // idx paths
  std::string typicality = "ground_truth";               // "ground_truth" | "holdout"
  int typicality_folds = 5;
};

struct MethodEntry {
  std::string name;  // unique label; defaults to the method id
  unlearn::UnlearnConfig cfg;
  std::string safeguard;  // label of another entry whose result seeds this one
};

struct AttackBlock {
  std::vector<int> relearn_sizes = {0, 10, 25};
  std::vector<std::string> reminder_study_sources = {"heldout_test"};
  std::vector<std::string> reminder_study_methods = {"scrub"};
  double relearn_lr = 3e-3;
  int relearn_epochs = 10;
  int relearn_batch = 64;
  double relearn_floor = 0.1;
  double corrupt_sigma = 0.5;
  std::vector<int> quant_bits = {2, 3, 4, 5, 6, 8, 10, 12, 16, 24, 32};
  bool mia = true;
};

struct DiagnosticsBlock {
  int lmc_points = 11;
};

struct SweepBlock {
  std::vector<int> epochs_list = {1, 3, 10, 30};
  std::vector<std::string> methods = {"weight_distortion", "catastrophic_forgetting"};
};

struct ExperimentConfig {
  std::string preset = "desk";  // "desk" | "paper"
  std::uint64_t seed = 0;
  std::string out_dir = "runs/experiment";
  std::string arch = "mlp_tiny";  // "mlp_tiny" | "conv_tiny"
  int threads = 1;

  DatasetBlock dataset;
  data::ForgetSpec forget;
  train::TrainConfig pretrain;
  unlearn::UnlearnConfig unlearn_defaults;  // shared knobs for method entries
  std::vector<MethodEntry> methods;
  AttackBlock attack;
  DiagnosticsBlock diagnostics;
  SweepBlock sweep;

  nlohmann::json to_json() const;
  std::uint64_t hash() const { return Fnv1a().str(to_json().dump()).value(); }
};

namespace detail {

inline MethodEntry make_entry(const std::string& method, const unlearn::UnlearnConfig& shared,
                              const nlohmann::json& params = nlohmann::json::object(),
                              double lr_override = 0, const std::string& safeguard = "") {
  MethodEntry e;
  e.name = method;
  e.cfg = shared;
  e.cfg.method = method;
  e.cfg.params = params;
  if (lr_override > 0) e.cfg.lr = lr_override;
  e.safeguard = safeguard;
  return e;
}

}  // namespace detail

// The 13 method entries of a preset, derived from the shared unlearn knobs.
// Desk parameters are calibrated to the desk networks; the paper preset
// keeps the published values.
inline std::vector<MethodEntry> preset_method_entries(const std::string& preset,
                                                      const unlearn::UnlearnConfig& shared) {
  using detail::make_entry;
  if (preset == "desk") {
    return {
        make_entry("scrub", shared),
        make_entry("circuit_breakers", shared, {}, 1e-2),
        make_entry("neggrad_plus", shared),
        make_entry("catastrophic_forgetting", shared, {{"coeff", 0.01}}),
        make_entry("l1_sparse", shared, {{"coeff", 0.001}}),
        make_entry("ssd", shared, {{"alpha", 10.0}, {"lambda", 3.0}}),
        make_entry("random_relabel", shared),
        make_entry("weight_attenuation", shared, {{"magnitude", 0.5}}),
        make_entry("weight_dropout", shared, {{"magnitude", 0.2}}),
        make_entry("weight_distortion", shared, {{"magnitude", 0.8}}),
        make_entry("weight_dist_reg", shared, {{"lambda", 5.0}}),
        make_entry("cbft", shared, {{"lambda_mid", 1.0}, {"loss_cap", 50.0}}),
        make_entry("tar", shared,
                   {{"inner_steps", 4.0}, {"inner_lr", 1e-4}, {"lambda_align", 1.0},
                    {"lambda_entropy", 0.1}},
                   1e-3, "scrub"),
    };
  }
  return {
      make_entry("scrub", shared),
      make_entry("circuit_breakers", shared),
      make_entry("neggrad_plus", shared),
      make_entry("catastrophic_forgetting", shared, {{"coeff", 0.001}}),
      make_entry("l1_sparse", shared, {{"coeff", 0.001}}),
      make_entry("ssd", shared, {{"alpha", 10.0}, {"lambda", 1.0}}),
      make_entry("random_relabel", shared),
      make_entry("weight_attenuation", shared, {{"magnitude", 0.5}}),
      make_entry("weight_dropout", shared, {{"magnitude", 0.2}}),
      make_entry("weight_distortion", shared, {{"magnitude", 0.02}}),
      make_entry("weight_dist_reg", shared, {{"lambda", 0.01}}),
      make_entry("cbft", shared, {{"lambda_mid", 0.001}, {"loss_cap", 50.0}}),
      make_entry("tar", shared,
                 {{"inner_steps", 4.0}, {"inner_lr", 1e-5}, {"lambda_align", 1.0},
                  {"lambda_entropy", 1.0}},
                 0, "scrub"),
  };
}

// Calibrated desk-scale defaults: small synthetic data, short budgets, and
// method parameters scaled to the desk networks.
inline ExperimentConfig desk_defaults(std::uint64_t seed) {
  ExperimentConfig c;
  c.preset = "desk";
  c.seed = seed;

  c.dataset.synth.classes = 10;
  c.dataset.synth.per_class = 500;
  c.dataset.synth.atypical_fraction = 0.10;
  c.dataset.synth.input_dim = 48;
  c.dataset.synth.modes_per_class = 10;
  c.dataset.synth.island_size = 10;
  c.dataset.synth.cluster_sigma = 1.0;
  c.dataset.synth.island_sigma = 0.25;
  c.dataset.synth.mean_radius = 7.0;
  c.dataset.synth.island_offset = 2.0;
  c.dataset.test_per_class = 200;

  c.forget.scope = data::ForgetScope::sub_class;
  c.forget.class_id = 0;
  c.forget.typicality = data::ForgetTypicality::atypical;
  c.forget.fraction = 0.10;

  c.pretrain.lr = 4e-2;
  c.pretrain.weight_decay = 1e-4;
  c.pretrain.epochs = 100;
  c.pretrain.batch_size = 64;
  c.pretrain.floor_factor = 0.1;

  c.unlearn_defaults.lr = 3e-3;
  c.unlearn_defaults.epochs = 30;
  c.unlearn_defaults.batch = 64;
  c.unlearn_defaults.weight_decay = 0.0;
  c.unlearn_defaults.floor_factor = 0.1;

  c.methods = preset_method_entries("desk", c.unlearn_defaults);
  c.attack.relearn_lr = 3e-3;
  return c;
}

// The paper's hyperparameters, kept as a named preset.
inline ExperimentConfig paper_defaults(std::uint64_t seed) {
  ExperimentConfig c = desk_defaults(seed);
  c.preset = "paper";

  c.pretrain.lr = 1e-4;
  c.pretrain.weight_decay = 1e-4;
  c.pretrain.epochs = 300;
  c.pretrain.batch_size = 128;
  c.pretrain.floor_factor = 0.1;

  c.unlearn_defaults.lr = 1e-5;
  c.unlearn_defaults.epochs = 100;
  c.unlearn_defaults.batch = 128;
  c.unlearn_defaults.weight_decay = 0.0;

  c.methods = preset_method_entries("paper", c.unlearn_defaults);
  c.attack.relearn_lr = 1e-5;
  c.attack.relearn_epochs = 10;
  c.attack.relearn_batch = 128;
  return c;
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                           const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    ULAB_CHECK(known.count(it.key()) == 1, "unknown config key '" + it.key() + "' in " + where);
}

template <typename T>
void take(const nlohmann::json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

inline void apply_dataset(const nlohmann::json& j, DatasetBlock& d) {
  reject_unknown(j,
                 {"kind", "classes", "per_class", "test_per_class", "atypical_fraction",
                  "input_dim", "modes_per_class", "island_size", "cluster_sigma", "island_sigma",
                  "mean_radius", "island_offset", "typicality", "typicality_folds", "images",
                  "labels", "test_images", "test_labels"},
                 "[dataset]");
  take(j, "kind", d.kind);
  ULAB_CHECK(d.kind == "synthetic" || d.kind == "idx", "dataset.kind must be synthetic or idx");
  take(j, "classes", d.synth.classes);
  take(j, "per_class", d.synth.per_class);
  take(j, "test_per_class", d.test_per_class);
  take(j, "atypical_fraction", d.synth.atypical_fraction);
  take(j, "input_dim", d.synth.input_dim);
  take(j, "modes_per_class", d.synth.modes_per_class);
  take(j, "island_size", d.synth.island_size);
  take(j, "cluster_sigma", d.synth.cluster_sigma);
  take(j, "island_sigma", d.synth.island_sigma);
  take(j, "mean_radius", d.synth.mean_radius);
  take(j, "island_offset", d.synth.island_offset);
  take(j, "typicality", d.typicality);
  ULAB_CHECK(d.typicality == "ground_truth" || d.typicality == "holdout",
             "dataset.typicality must be ground_truth or holdout");
  take(j, "typicality_folds", d.typicality_folds);
  take(j, "images", d.images);
  take(j, "labels", d.labels);
  take(j, "test_images", d.test_images);
  take(j, "test_labels", d.test_labels);
}

inline void apply_train(const nlohmann::json& j, train::TrainConfig& t, const std::string& where) {
  reject_unknown(j, {"lr", "weight_decay", "epochs", "batch", "floor_factor", "eval_every"}, where);
  take(j, "lr", t.lr);
  take(j, "weight_decay", t.weight_decay);
  take(j, "epochs", t.epochs);
  take(j, "batch", t.batch_size);
  take(j, "floor_factor", t.floor_factor);
  take(j, "eval_every", t.eval_every);
}

inline void apply_attack(const nlohmann::json& j, AttackBlock& a) {
  reject_unknown(j,
                 {"relearn_sizes", "reminder_study_sources", "reminder_study_methods",
                  "relearn_lr", "relearn_epochs", "relearn_batch", "relearn_floor",
                  "corrupt_sigma", "quant_bits", "mia"},
                 "[attack]");
  take(j, "relearn_sizes", a.relearn_sizes);
  take(j, "reminder_study_sources", a.reminder_study_sources);
  take(j, "reminder_study_methods", a.reminder_study_methods);
  take(j, "relearn_lr", a.relearn_lr);
  take(j, "relearn_epochs", a.relearn_epochs);
  take(j, "relearn_batch", a.relearn_batch);
  take(j, "relearn_floor", a.relearn_floor);
  take(j, "corrupt_sigma", a.corrupt_sigma);
  take(j, "quant_bits", a.quant_bits);
  take(j, "mia", a.mia);
}

}  // namespace detail

// Resolve a parsed config document: preset defaults first, then overrides.
// Unknown keys are rejected everywhere.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ULAB_CHECK(j.is_object(), "config root must be a table");
  detail::reject_unknown(j,
                         {"preset", "seed", "out", "arch", "threads", "dataset", "forget",
                          "pretrain", "unlearn", "methods", "attack", "diagnostics", "sweep"},
                         "config root");
  std::string preset = "desk";
  detail::take(j, "preset", preset);
  std::uint64_t seed = 0;
  detail::take(j, "seed", seed);
  ULAB_CHECK(preset == "desk" || preset == "paper", "preset must be desk or paper");
  ExperimentConfig c = preset == "desk" ? desk_defaults(seed) : paper_defaults(seed);

  detail::take(j, "out", c.out_dir);
  detail::take(j, "arch", c.arch);
  ULAB_CHECK(c.arch == "mlp_tiny" || c.arch == "conv_tiny", "arch must be mlp_tiny or conv_tiny");
  detail::take(j, "threads", c.threads);
  ULAB_CHECK(c.threads >= 1, "threads must be at least 1");

  if (j.contains("dataset")) detail::apply_dataset(j.at("dataset"), c.dataset);
  c.dataset.synth.seed = c.seed;
  if (j.contains("forget")) {
    auto f = j.at("forget");
    detail::reject_unknown(f, {"scope", "class_id", "typicality", "fraction", "count", "seed"},
                           "[forget]");
    nlohmann::json merged = c.forget.to_json();
    for (auto it = f.begin(); it != f.end(); ++it) merged[it.key()] = it.value();
    c.forget = data::ForgetSpec::from_json(merged);
  }
  if (j.contains("pretrain")) detail::apply_train(j.at("pretrain"), c.pretrain, "[pretrain]");
  if (j.contains("unlearn")) {
    auto u = j.at("unlearn");
    detail::reject_unknown(u, {"lr", "weight_decay", "epochs", "batch", "floor_factor"},
                           "[unlearn]");
    detail::take(u, "lr", c.unlearn_defaults.lr);
    detail::take(u, "weight_decay", c.unlearn_defaults.weight_decay);
    detail::take(u, "epochs", c.unlearn_defaults.epochs);
    detail::take(u, "batch", c.unlearn_defaults.batch);
    detail::take(u, "floor_factor", c.unlearn_defaults.floor_factor);
    // rebuild the default method list from the updated shared knobs
    c.methods = preset_method_entries(c.preset, c.unlearn_defaults);
  }
  if (j.contains("methods")) {
    ULAB_CHECK(j.at("methods").is_array(), "methods must be an array of tables");
    c.methods.clear();
    for (const auto& entry : j.at("methods")) {
      nlohmann::json merged = c.unlearn_defaults.to_json();
      merged.erase("method");
      for (auto it = entry.begin(); it != entry.end(); ++it) merged[it.key()] = it.value();
      MethodEntry e;
      e.cfg = unlearn::UnlearnConfig::from_json(merged);
      e.name = entry.value("name", e.cfg.method);
      e.safeguard = entry.value("safeguard", std::string{});
      c.methods.push_back(std::move(e));
    }
  }
  if (j.contains("attack")) detail::apply_attack(j.at("attack"), c.attack);
  if (j.contains("diagnostics")) {
    auto d = j.at("diagnostics");
    detail::reject_unknown(d, {"lmc_points"}, "[diagnostics]");
    detail::take(d, "lmc_points", c.diagnostics.lmc_points);
  }
  if (j.contains("sweep")) {
    auto s = j.at("sweep");
    detail::reject_unknown(s, {"epochs_list", "methods"}, "[sweep]");
    detail::take(s, "epochs_list", c.sweep.epochs_list);
    detail::take(s, "methods", c.sweep.methods);
  }

  // structural validation
  std::set<std::string> names;
  for (const auto& m : c.methods) {
    ULAB_CHECK(names.insert(m.name).second, "duplicate method name: " + m.name);
    ULAB_CHECK(unlearn::method_param_keys().count(m.cfg.method) == 1,
               "unknown unlearning method: " + m.cfg.method);
  }
  for (const auto& m : c.methods) {
    if (m.cfg.method == "tar")
      ULAB_CHECK(!m.safeguard.empty(), "tar entry '" + m.name + "' needs a safeguard");
    if (!m.safeguard.empty()) {
      ULAB_CHECK(m.safeguard != m.name, "method '" + m.name + "' cannot safeguard itself");
      ULAB_CHECK(names.count(m.safeguard) == 1,
                 "method '" + m.name + "' references unknown safeguard '" + m.safeguard + "'");
    }
  }
  for (int n : c.attack.relearn_sizes) ULAB_CHECK(n >= 0, "relearn sizes must be non-negative");
  ULAB_CHECK(!c.attack.relearn_sizes.empty(), "at least one relearn size is required");
  ULAB_CHECK(c.diagnostics.lmc_points >= 3, "lmc_points must be at least 3");
  if (c.dataset.kind == "idx")
    ULAB_CHECK(!c.dataset.images.empty() && !c.dataset.labels.empty() &&
                   !c.dataset.test_images.empty() && !c.dataset.test_labels.empty(),
               "idx datasets need images/labels/test_images/test_labels paths");
  return c;
}

inline ExperimentConfig load_config_text(const std::string& text, bool is_toml) {
  return config_from_json(is_toml ? toml::parse(text) : nlohmann::json::parse(text));
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  ULAB_CHECK(f.good(), "cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const bool is_json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
  try {
    return load_config_text(text, !is_json);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
}

inline nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["preset"] = preset;
  j["seed"] = seed;
  j["out"] = out_dir;
  j["arch"] = arch;
  j["threads"] = threads;
  j["dataset"] = {{"kind", dataset.kind},
                  {"classes", dataset.synth.classes},
                  {"per_class", dataset.synth.per_class},
                  {"test_per_class", dataset.test_per_class},
                  {"atypical_fraction", dataset.synth.atypical_fraction},
                  {"input_dim", dataset.synth.input_dim},
                  {"modes_per_class", dataset.synth.modes_per_class},
                  {"island_size", dataset.synth.island_size},
                  {"cluster_sigma", dataset.synth.cluster_sigma},
                  {"island_sigma", dataset.synth.island_sigma},
                  {"mean_radius", dataset.synth.mean_radius},
                  {"island_offset", dataset.synth.island_offset},
                  {"typicality", dataset.typicality},
                  {"typicality_folds", dataset.typicality_folds},
                  {"images", dataset.images},
                  {"labels", dataset.labels},
                  {"test_images", dataset.test_images},
                  {"test_labels", dataset.test_labels}};
  j["forget"] = forget.to_json();
  j["pretrain"] = {{"lr", pretrain.lr},         {"weight_decay", pretrain.weight_decay},
                   {"epochs", pretrain.epochs}, {"batch", pretrain.batch_size},
                   {"floor_factor", pretrain.floor_factor}, {"eval_every", pretrain.eval_every}};
  j["methods"] = nlohmann::json::array();
  for (const auto& m : methods) {
    nlohmann::json e = m.cfg.to_json();
    e["name"] = m.name;
    if (!m.safeguard.empty()) e["safeguard"] = m.safeguard;
    j["methods"].push_back(std::move(e));
  }
  j["attack"] = {{"relearn_sizes", attack.relearn_sizes},
                 {"reminder_study_sources", attack.reminder_study_sources},
                 {"reminder_study_methods", attack.reminder_study_methods},
                 {"relearn_lr", attack.relearn_lr},
                 {"relearn_epochs", attack.relearn_epochs},
                 {"relearn_batch", attack.relearn_batch},
                 {"relearn_floor", attack.relearn_floor},
                 {"corrupt_sigma", attack.corrupt_sigma},
                 {"quant_bits", attack.quant_bits},
                 {"mia", attack.mia}};
  j["diagnostics"] = {{"lmc_points", diagnostics.lmc_points}};
  j["sweep"] = {{"epochs_list", sweep.epochs_list}, {"methods", sweep.methods}};
  return j;
}

inline nn::ModelSpec model_spec_for(const ExperimentConfig& c, const data::Dataset& train) {
  if (c.arch == "mlp_tiny") {
    std::size_t flat = train.x.row_size();
    return nn::mlp_tiny(static_cast<int>(flat), train.classes);
  }
  ULAB_CHECK(train.x.rank() == 4, "conv_tiny needs (N, C, H, W) data");
  return nn::conv_tiny(static_cast<int>(train.x.dim(1)), static_cast<int>(train.x.dim(2)),
                       static_cast<int>(train.x.dim(3)), train.classes);
}

}  // namespace ulab::exp
