#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "ulab/attack/mia.hpp"
#include "ulab/attack/quantize.hpp"
#include "ulab/attack/relearn.hpp"
#include "ulab/data/idx.hpp"
#include "ulab/data/synthetic.hpp"
#include "ulab/data/typicality.hpp"
#include "ulab/diag/distance.hpp"
#include "ulab/diag/lmc.hpp"
#include "ulab/diag/stats.hpp"
#include "ulab/exp/config.hpp"
#include "ulab/exp/manifest.hpp"
#include "ulab/exp/report.hpp"
#include "ulab/exp/svg.hpp"
#include "ulab/nn/checkpoint_io.hpp"
#include "ulab/unlearn/methods.hpp"

namespace ulab::exp {

namespace fs = std::filesystem;

struct RelearnCell {
  std::string source;
  int n_relearn = 0;
  ScatterPoint tail;                      // stream-tail aggregate
  double final_test = 0;                  // direct eval of the relearned checkpoint
  double final_forget_ho = 0;
  double pre_attack_forget_ho = 0;        // attacked checkpoint on this cell's holdout
};

struct MethodOutcome {
  std::string name, method;
  double distance = 0;
  std::int64_t steps = 0;
  double seconds = 0;
  ScatterPoint unlearn_tail;
  double post_unlearn_test = 0;
  double post_unlearn_forget = 0;  // on the full forget set
  std::vector<RelearnCell> cells;
  double mia_acc = -1;
  bool mia_degenerate = false;
  std::vector<attack::QuantRow> quant;
  double barrier = -1;
};

struct SweepRow {
  std::string method;
  int epochs;
  double unlearn_test, unlearn_forget_ho, relearn_test, relearn_forget_ho;
};

struct ExperimentResult {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  double pretrain_test = 0, pretrain_forget = 0;
  MethodOutcome retrain;  // gold standard, same record shape as the methods
  double pretrain_mia = -1;
  std::vector<MethodOutcome> methods;
  std::vector<SweepRow> sweep;
  double spearman_distance_recovery = 0;
  double spearman_barrier_recovery = 0;
  std::string better_predictor;

  const MethodOutcome* find(const std::string& name) const {
    for (const auto& m : methods)
      if (m.name == name) return &m;
    return nullptr;
  }
  static const RelearnCell* cell(const MethodOutcome& m, const std::string& source, int n) {
    for (const auto& c : m.cells)
      if (c.source == source && c.n_relearn == n) return &c;
    return nullptr;
  }

  nlohmann::json to_json() const;
};

inline void run_parallel(std::vector<std::function<void()>>& tasks, int threads) {
  if (threads <= 1 || tasks.size() <= 1) {
    for (auto& t : tasks) t();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  std::vector<std::thread> workers;
  const int n = std::min<int>(threads, static_cast<int>(tasks.size()));
  for (int i = 0; i < n; ++i) {
    workers.emplace_back([&] {
      while (true) {
        const std::size_t k = next.fetch_add(1);
        if (k >= tasks.size()) return;
        try {
          tasks[k]();
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Orchestrates data -> pretrain -> retrain -> unlearning methods -> attacks
// -> diagnostics -> sweep -> reports from one declarative config. Completed
// stages are detected through the manifest and skipped on rerun.
class Experiment {
 public:
  enum class Stage { data, pretrain, retrain, unlearn, attacks, diagnostics, sweep, reports };

  Experiment(ExperimentConfig cfg, bool audit_enabled = true)
      : cfg_(std::move(cfg)), audit_enabled_(audit_enabled) {
    root_ = fs::path(cfg_.out_dir);
    fs::create_directories(root_ / "checkpoints");
    fs::create_directories(root_ / "metrics");
    fs::create_directories(root_ / "bundles");
    fs::create_directories(root_ / "report");
    const std::string mpath = manifest_path();
    if (fs::exists(mpath)) {
      RunManifest existing = RunManifest::load(mpath);
      if (existing.matches(cfg_.hash())) {
        manifest_ = existing;
        resumed_ = true;
      } else {
        manifest_ = RunManifest::fresh(cfg_.hash(), cfg_.seed, cfg_.to_json(), kToolVersion);
      }
    } else {
      manifest_ = RunManifest::fresh(cfg_.hash(), cfg_.seed, cfg_.to_json(), kToolVersion);
    }
  }

  const ExperimentResult& result() const { return result_; }
  const RunManifest& manifest() const { return manifest_; }
  const data::AccessAudit& audit() const { return audit_; }
  bool resumed() const { return resumed_; }
  std::string manifest_path() const { return (root_ / "manifest.json").string(); }

  // Runs every stage up to and including `until`.
  ExperimentResult run(Stage until = Stage::reports) {
    run_stage("data", [&] { stage_data(); });
    if (until == Stage::data) return result_;
    run_stage("pretrain", [&] { stage_pretrain(); });
    if (until == Stage::pretrain) return result_;
    run_stage("retrain", [&] { stage_retrain(); });
    if (until == Stage::retrain) return result_;
    stage_unlearn_all();
    if (until == Stage::unlearn) return result_;
    stage_attacks_all();
    if (until == Stage::attacks) return result_;
    // diagnostics and reports are pure reads over checkpoints and streams;
    // recomputing keeps the result consistent on resumed runs
    run_stage("diagnostics", [&] { stage_diagnostics(); }, /*skippable=*/false);
    if (until == Stage::diagnostics) return result_;
    run_stage("sweep", [&] { stage_sweep(); });
    if (until == Stage::sweep) return result_;
    run_stage("reports", [&] { stage_reports(); }, /*skippable=*/false);
    manifest_.validate(cfg_.hash());
    return result_;
  }

  std::size_t stages_executed() const { return stages_executed_; }

 private:
  // ------------------------------------------------------------------ utils

  void run_stage(const std::string& id, const std::function<void()>& body,
                 bool skippable = true) {
    if (skippable && stage_done_locked(id)) {
      load_stage(id);
      return;
    }
    try {
      body();
      if (audit_enabled_) audit_.require_clean();
      ++stages_executed_;
      {
        std::lock_guard<std::mutex> lock(manifest_mu_);
        manifest_.mark_done(id);
      }
      save_manifest();
    } catch (const AuditError& e) {
      record_failure(id, e.what());
      throw AuditError("stage '" + id + "' failed: " + e.what());
    } catch (const std::exception& e) {
      record_failure(id, e.what());
      throw Error("stage '" + id + "' failed: " + e.what());
    }
  }

  void record_failure(const std::string& id, const std::string& why) {
    std::lock_guard<std::mutex> lock(manifest_mu_);
    manifest_.mark_failed(id, why);
    manifest_.save(manifest_path());
  }

  void save_manifest() {
    std::lock_guard<std::mutex> lock(manifest_mu_);
    manifest_.save(manifest_path());
  }

  bool stage_done_locked(const std::string& id) {
    std::lock_guard<std::mutex> lock(manifest_mu_);
    return manifest_.stage_done(id);
  }

  std::string save_ckpt(const std::string& stage, const std::string& name,
                        const nn::Checkpoint<float>& ckpt) {
    const std::string file =
        "checkpoints/" + name + "-" + hex64(nn::content_hash(ckpt)).substr(0, 12) + ".ulck";
    const std::string path = (root_ / file).string();
    nn::save_checkpoint(path, spec_, ckpt);
    std::lock_guard<std::mutex> lock(manifest_mu_);
    manifest_.record_artifact(stage, "ckpt:" + name, path);
    return path;
  }

  nn::Checkpoint<float> load_ckpt(const std::string& stage, const std::string& name) {
    return nn::load_checkpoint(manifest_.artifact(stage, "ckpt:" + name), spec_);
  }

  std::string save_metrics(const std::string& stage, const std::string& name,
                           const std::vector<train::MetricsRecord>& rows) {
    const std::string path = (root_ / ("metrics/" + name + ".csv")).string();
    train::write_metrics_csv(path, rows);
    std::lock_guard<std::mutex> lock(manifest_mu_);
    manifest_.record_artifact(stage, "metrics:" + name, path);
    return path;
  }

  double eval_test(const nn::Checkpoint<float>& c) const { return train::accuracy(*net_, c, test_); }
  double eval_on(const nn::Checkpoint<float>& c, const data::Dataset& d) const {
    return train::accuracy(*net_, c, d);
  }

  train::PhaseHooks hooks(const std::string& phase, const data::Dataset* forget_view,
                          std::vector<train::MetricsRecord>* sink) {
    train::PhaseHooks h;
    h.phase = phase;
    h.metrics = sink;
    h.eval = train::make_metric_eval(*net_, &test_, forget_view);
    h.audit = audit_enabled_ ? &audit_ : nullptr;
    return h;
  }

  const data::DatasetBundle& bundle(int n) const { return bundles_.at(n); }

  // ------------------------------------------------------------------ stages

  void stage_data() {
    build_datasets();
    for (int n : bundle_sizes()) {
      const std::string path = (root_ / ("bundles/bundle-n" + std::to_string(n) + ".json")).string();
      std::ofstream f(path, std::ios::trunc);
      f << bundles_.at(n).manifest().dump(2) << '\n';
      manifest_.record_artifact("data", "bundle:" + std::to_string(n), path);
    }
    if (!scores_path_.empty()) manifest_.record_artifact("data", "scores", scores_path_);
  }

  std::vector<int> bundle_sizes() const {
    std::set<int> sizes(cfg_.attack.relearn_sizes.begin(), cfg_.attack.relearn_sizes.end());
    sizes.insert(0);  // the n = 0 split anchors unlearn metrics and diagnostics
    return {sizes.begin(), sizes.end()};
  }

  void build_datasets() {
    if (cfg_.dataset.kind == "synthetic") {
      auto [tr, trs] = data::make_synthetic(cfg_.dataset.synth);
      auto [te, tes] = data::make_synthetic_test(cfg_.dataset.synth, cfg_.dataset.test_per_class);
      train_full_ = std::move(tr);
      train_scores_ = std::move(trs);
      test_ = std::move(te);
      test_scores_ = std::move(tes);
    } else {
      train_full_ = data::load_idx(cfg_.dataset.images, cfg_.dataset.labels, 0);
      test_ = data::load_idx(cfg_.dataset.test_images, cfg_.dataset.test_labels,
                             static_cast<std::uint32_t>(train_full_.size()));
      test_scores_.method = "none";
      test_scores_.score.assign(test_.size(), 1.0f);
    }
    spec_ = model_spec_for(cfg_, train_full_);
    net_ = std::make_unique<nn::Network<float>>(spec_);

    if (cfg_.dataset.typicality == "holdout" || cfg_.dataset.kind == "idx") {
      const std::string path = (root_ / "bundles/typicality.csv").string();
      if (fs::exists(path)) {
        train_scores_ = load_scores_csv(path);
      } else {
        train::TrainConfig fold_cfg = cfg_.pretrain;
        fold_cfg.epochs = std::max(cfg_.pretrain.epochs / 5, 5);
        train_scores_ = data::score_typicality_holdout(
            *net_, train_full_, fold_cfg, cfg_.dataset.typicality_folds,
            derive_seed(cfg_.seed, "typicality"), audit_enabled_ ? &audit_ : nullptr);
        save_scores_csv(path, train_scores_);
      }
      scores_path_ = path;
    }

    for (int n : bundle_sizes()) {
      data::ForgetSpec forget = cfg_.forget;
      forget.seed = derive_seed(cfg_.seed, "forget-spec");
      bundles_.emplace(n, data::build_bundle(train_full_, train_scores_, test_, test_scores_,
                                             forget, n, derive_seed(cfg_.seed, "bundle")));
    }
    forget_full_ = bundles_.at(0).forget();
  }

  void load_stage(const std::string& id) {
    if (id == "data") {
      build_datasets();  // datasets are regenerated deterministically
      return;
    }
    if (id == "pretrain") {
      init_ = load_ckpt("pretrain", "init");
      pretrained_ = load_ckpt("pretrain", "pretrained");
      result_.pretrain_test = eval_test(pretrained_);
      result_.pretrain_forget = eval_on(pretrained_, forget_full_);
      return;
    }
    if (id == "retrain") {
      retrained_ = load_ckpt("retrain", "retrain_from_scratch");
      auto stream = train::read_metrics_csv(manifest_.artifact("retrain", "metrics:retrain"));
      fill_base_outcome(result_.retrain, "retrain_from_scratch", "retrain_from_scratch",
                        retrained_, stream);
      return;
    }
    if (id.rfind("unlearn:", 0) == 0) {
      const std::string name = id.substr(8);
      for (std::size_t i = 0; i < cfg_.methods.size(); ++i)
        if (cfg_.methods[i].name == name) {
          load_unlearn_one(i);
          return;
        }
      throw Error("manifest references unknown method: " + name);
    }
    if (id == "sweep") {
      load_sweep_csv();
      return;
    }
    // attack/quant/mia cells are reloaded in bulk after the attack wave.
  }

  void load_sweep_csv() {
    if (cfg_.sweep.methods.empty() || cfg_.sweep.epochs_list.empty()) return;
    std::ifstream f((root_ / "report/epoch_sweep.csv").string());
    ULAB_CHECK(f.good(), "missing sweep artifact");
    std::string line;
    std::getline(f, line);
    result_.sweep.clear();
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      std::istringstream is(line);
      SweepRow r;
      std::string field;
      std::getline(is, r.method, ',');
      std::getline(is, field, ',');
      r.epochs = std::stoi(field);
      std::getline(is, field, ',');
      r.unlearn_test = std::stod(field);
      std::getline(is, field, ',');
      r.unlearn_forget_ho = std::stod(field);
      std::getline(is, field, ',');
      r.relearn_test = std::stod(field);
      std::getline(is, field, ',');
      r.relearn_forget_ho = std::stod(field);
      result_.sweep.push_back(std::move(r));
    }
  }

  void stage_pretrain() {
    init_ = net_->init(derive_seed(cfg_.seed, "model-init"));
    save_ckpt("pretrain", "init", init_);
    std::vector<train::MetricsRecord> stream;
    train::TrainConfig tc = cfg_.pretrain;
    tc.seed = derive_seed(cfg_.seed, "pretrain-shuffle");
    auto h = hooks("pretrain", &forget_full_, &stream);
    if (audit_enabled_) audit_.allow("pretrain", train_full_.ids);
    pretrained_ = train::fit(*net_, init_, train_full_, tc, std::move(h));
    save_ckpt("pretrain", "pretrained", pretrained_);
    save_metrics("pretrain", "pretrain", stream);
    result_.pretrain_test = eval_test(pretrained_);
    result_.pretrain_forget = eval_on(pretrained_, forget_full_);
  }

  void stage_retrain() {
    std::vector<train::MetricsRecord> stream;
    train::TrainConfig tc = cfg_.pretrain;
    tc.seed = derive_seed(cfg_.seed, "retrain-shuffle");
    auto h = hooks("retrain", &forget_full_, &stream);
    retrained_ = train::retrain_from_scratch(*net_, init_, bundle(0), tc, std::move(h));
    save_ckpt("retrain", "retrain_from_scratch", retrained_);
    save_metrics("retrain", "retrain", stream);
    fill_base_outcome(result_.retrain, "retrain_from_scratch", "retrain_from_scratch", retrained_,
                      stream);
  }

  void fill_base_outcome(MethodOutcome& out, const std::string& name, const std::string& method,
                         const nn::Checkpoint<float>& ckpt,
                         const std::vector<train::MetricsRecord>& stream) {
    out.name = name;
    out.method = method;
    out.distance = nn::l2_param_distance(ckpt, pretrained_);
    out.unlearn_tail = aggregate_tail(stream);
    out.post_unlearn_test = eval_test(ckpt);
    out.post_unlearn_forget = eval_on(ckpt, forget_full_);
  }

  void stage_unlearn_all() {
    result_.methods.assign(cfg_.methods.size(), MethodOutcome{});
    // waves: entries whose safeguard is already available run together
    std::set<std::string> ready;
    std::vector<bool> done(cfg_.methods.size(), false);
    while (ready.size() < cfg_.methods.size()) {
      std::vector<std::size_t> wave;
      for (std::size_t i = 0; i < cfg_.methods.size(); ++i) {
        if (done[i]) continue;
        const auto& sg = cfg_.methods[i].safeguard;
        if (sg.empty() || ready.count(sg) == 1) wave.push_back(i);
      }
      ULAB_CHECK(!wave.empty(), "method safeguard references form a cycle");
      std::vector<std::function<void()>> tasks;
      for (std::size_t i : wave)
        tasks.push_back([this, i] { run_stage("unlearn:" + cfg_.methods[i].name,
                                              [this, i] { stage_unlearn_one(i); }); });
      run_parallel(tasks, cfg_.threads);
      for (std::size_t i : wave) {
        done[i] = true;
        ready.insert(cfg_.methods[i].name);
      }
    }
  }

  nn::Checkpoint<float>* unlearned_ckpt(const std::string& name) {
    auto it = unlearned_.find(name);
    return it == unlearned_.end() ? nullptr : &it->second;
  }

  void stage_unlearn_one(std::size_t index) {
    const auto& entry = cfg_.methods[index];
    const std::string stage = "unlearn:" + entry.name;
    MethodOutcome& out = result_.methods[index];
    unlearn::UnlearnConfig ucfg = entry.cfg;
    ucfg.seed = derive_seed(cfg_.seed, "unlearn-" + entry.name);

    const nn::Checkpoint<float>* safeguard = nullptr;
    if (!entry.safeguard.empty()) {
      safeguard = unlearned_ckpt(entry.safeguard);
      ULAB_CHECK(safeguard != nullptr, "safeguard result missing for " + entry.name);
    }
    auto h = hooks(stage, &forget_full_, nullptr);
    auto res = unlearn::run_unlearn(*net_, pretrained_, bundle(0), ucfg, std::move(h), safeguard,
                                    safeguard);
    save_ckpt(stage, entry.name, res.ckpt);
    save_metrics(stage, "unlearn-" + entry.name, res.metrics);
    {
      std::lock_guard<std::mutex> lock(manifest_mu_);
      nlohmann::json info = {{"steps", res.steps}, {"seconds", res.seconds},
                             {"distance", res.l2_from_pretrained}};
      const std::string path = (root_ / ("metrics/unlearn-" + entry.name + "-info.json")).string();
      std::ofstream f(path, std::ios::trunc);
      f << info.dump(2) << '\n';
      manifest_.record_artifact(stage, "info", path);
    }
    fill_base_outcome(out, entry.name, entry.cfg.method, res.ckpt, res.metrics);
    out.steps = res.steps;
    out.seconds = res.seconds;
    {
      std::lock_guard<std::mutex> lock(data_mu_);
      unlearned_.emplace(entry.name, std::move(res.ckpt));
    }
  }

  void load_unlearn_one(std::size_t index) {
    const auto& entry = cfg_.methods[index];
    const std::string stage = "unlearn:" + entry.name;
    auto ckpt = load_ckpt(stage, entry.name);
    auto stream = train::read_metrics_csv(manifest_.artifact(stage, "metrics:unlearn-" + entry.name));
    MethodOutcome& out = result_.methods[index];
    fill_base_outcome(out, entry.name, entry.cfg.method, ckpt, stream);
    std::ifstream f(manifest_.artifact(stage, "info"));
    nlohmann::json info;
    f >> info;
    out.steps = info.value("steps", std::int64_t{0});
    out.seconds = info.value("seconds", 0.0);
    std::lock_guard<std::mutex> lock(data_mu_);
    unlearned_.emplace(entry.name, std::move(ckpt));
  }

  struct AttackTarget {
    std::string name;
    const nn::Checkpoint<float>* ckpt;
    MethodOutcome* out;
  };

  std::vector<AttackTarget> attack_targets() {
    std::vector<AttackTarget> t;
    t.push_back({"retrain_from_scratch", &retrained_, &result_.retrain});
    for (std::size_t i = 0; i < cfg_.methods.size(); ++i)
      t.push_back({cfg_.methods[i].name, unlearned_ckpt(cfg_.methods[i].name),
                   &result_.methods[i]});
    return t;
  }

  bool in_reminder_study(const std::string& name) const {
    if (name == "retrain_from_scratch") return true;
    for (const auto& m : cfg_.attack.reminder_study_methods)
      if (m == name) return true;
    return false;
  }

  void stage_attacks_all() {
    // make sure unlearned checkpoints are present (resume path)
    for (std::size_t i = 0; i < cfg_.methods.size(); ++i)
      if (unlearned_ckpt(cfg_.methods[i].name) == nullptr) load_unlearn_one(i);

    std::vector<std::function<void()>> tasks;
    for (auto target : attack_targets()) {
      for (int n : cfg_.attack.relearn_sizes) {
        tasks.push_back([this, target, n] {
          const std::string id = "attack:" + target.name + ":retain:" + std::to_string(n);
          run_stage(id, [&] { attack_cell(target, "retain", n); });
        });
        if (in_reminder_study(target.name)) {
          for (const auto& src : cfg_.attack.reminder_study_sources) {
            tasks.push_back([this, target, src, n] {
              const std::string id = "attack:" + target.name + ":" + src + ":" + std::to_string(n);
              run_stage(id, [&] { attack_cell(target, src, n); });
            });
          }
        }
      }
      tasks.push_back([this, target] {
        run_stage("quant:" + target.name, [&] { quant_cell(target); });
      });
      if (cfg_.attack.mia) {
        tasks.push_back([this, target] {
          run_stage("mia:" + target.name, [&] { mia_cell(target); });
        });
      }
    }
    if (cfg_.attack.mia) {
      tasks.push_back([this] {
        run_stage("mia:pretrained", [&] {
          result_.pretrain_mia =
              attack::mia_balanced_loss_threshold(*net_, pretrained_, bundle(0),
                                                  derive_seed(cfg_.seed, "mia")).balanced_accuracy;
        });
      });
    }
    run_parallel(tasks, cfg_.threads);

    // resume path: cells that were skipped need their numbers recomputed
    for (auto target : attack_targets()) {
      for (int n : cfg_.attack.relearn_sizes) ensure_cell_loaded(target, "retain", n);
      if (in_reminder_study(target.name))
        for (const auto& src : cfg_.attack.reminder_study_sources)
          for (int n : cfg_.attack.relearn_sizes) ensure_cell_loaded(target, src, n);
      if (target.out->quant.empty() && !cfg_.attack.quant_bits.empty()) load_quant(target);
      if (cfg_.attack.mia && target.out->mia_acc < 0) mia_cell(target);
    }
    if (cfg_.attack.mia && result_.pretrain_mia < 0)
      result_.pretrain_mia =
          attack::mia_balanced_loss_threshold(*net_, pretrained_, bundle(0),
                                              derive_seed(cfg_.seed, "mia")).balanced_accuracy;
  }

  attack::RelearnConfig relearn_cfg(const std::string& source, int n) const {
    attack::RelearnConfig rc;
    rc.n_relearn = n;
    rc.source = attack::reminder_source_from(source);
    rc.lr = cfg_.attack.relearn_lr;
    rc.epochs = cfg_.attack.relearn_epochs;
    rc.batch = cfg_.attack.relearn_batch;
    rc.floor_factor = cfg_.attack.relearn_floor;
    rc.corrupt_sigma = cfg_.attack.corrupt_sigma;
    rc.seed = derive_seed(cfg_.seed, "relearn-" + source, static_cast<std::uint64_t>(n));
    return rc;
  }

  void attack_cell(const AttackTarget& target, const std::string& source, int n) {
    const auto& b = bundle(n);
    const data::Dataset forget_ho = b.forget_holdout();
    const std::string id = target.name + "-" + source + "-n" + std::to_string(n);
    const std::string stage = "attack:" + target.name + ":" + source + ":" + std::to_string(n);

    std::vector<train::MetricsRecord> stream;
    train::PhaseHooks h;
    h.phase = stage;
    h.metrics = &stream;
    h.eval = train::make_metric_eval(*net_, &test_, &forget_ho);
    h.audit = audit_enabled_ ? &audit_ : nullptr;
    auto outcome = attack::relearn(*net_, *target.ckpt, b, relearn_cfg(source, n), std::move(h));

    save_ckpt(stage, "relearn-" + id, outcome.ckpt);
    save_metrics(stage, "relearn-" + id, outcome.metrics);

    RelearnCell cell;
    cell.source = source;
    cell.n_relearn = n;
    cell.tail = aggregate_tail(outcome.metrics);
    cell.final_test = eval_test(outcome.ckpt);
    cell.final_forget_ho = eval_on(outcome.ckpt, forget_ho);
    cell.pre_attack_forget_ho = eval_on(*target.ckpt, forget_ho);
    std::lock_guard<std::mutex> lock(data_mu_);
    target.out->cells.push_back(std::move(cell));
  }

  void ensure_cell_loaded(const AttackTarget& target, const std::string& source, int n) {
    if (ExperimentResult::cell(*target.out, source, n) != nullptr) return;
    const std::string id = target.name + "-" + source + "-n" + std::to_string(n);
    const std::string stage = "attack:" + target.name + ":" + source + ":" + std::to_string(n);
    const auto& b = bundle(n);
    const data::Dataset forget_ho = b.forget_holdout();
    auto ckpt = nn::load_checkpoint(manifest_.artifact(stage, "ckpt:relearn-" + id), spec_);
    auto stream = train::read_metrics_csv(manifest_.artifact(stage, "metrics:relearn-" + id));
    RelearnCell cell;
    cell.source = source;
    cell.n_relearn = n;
    cell.tail = aggregate_tail(stream);
    cell.final_test = eval_test(ckpt);
    cell.final_forget_ho = eval_on(ckpt, forget_ho);
    cell.pre_attack_forget_ho = eval_on(*target.ckpt, forget_ho);
    target.out->cells.push_back(std::move(cell));
  }

  void quant_cell(const AttackTarget& target) {
    auto rows = attack::quantization_sweep(*net_, *target.ckpt, cfg_.attack.quant_bits, test_,
                                           bundle(0).forget_holdout());
    const std::string path = (root_ / ("report/quant-" + target.name + ".csv")).string();
    write_quant_csv(path, rows);
    {
      std::lock_guard<std::mutex> lock(manifest_mu_);
      manifest_.record_artifact("quant:" + target.name, "csv", path);
    }
    std::lock_guard<std::mutex> lock(data_mu_);
    target.out->quant = std::move(rows);
  }

  void load_quant(const AttackTarget& target) {
    // cheap to recompute from the checkpoint
    target.out->quant = attack::quantization_sweep(*net_, *target.ckpt, cfg_.attack.quant_bits,
                                                   test_, bundle(0).forget_holdout());
  }

  void mia_cell(const AttackTarget& target) {
    auto rep = attack::mia_balanced_loss_threshold(*net_, *target.ckpt, bundle(0),
                                                   derive_seed(cfg_.seed, "mia"));
    std::lock_guard<std::mutex> lock(data_mu_);
    target.out->mia_acc = rep.balanced_accuracy;
    target.out->mia_degenerate = rep.degenerate;
  }

  void stage_diagnostics() {
    const data::Dataset retain = bundle(0).retain();
    const data::Dataset& forget = forget_full_;
    auto curve_for = [&](const std::string& name, const nn::Checkpoint<float>& b) {
      auto curve = diag::lmc_curve(*net_, pretrained_, b, cfg_.diagnostics.lmc_points, test_,
                                   forget, retain, "pretrained", name);
      write_lmc_csv((root_ / ("report/lmc-" + name + ".csv")).string(), curve);
      manifest_.record_artifact("diagnostics", "lmc:" + name,
                                (root_ / ("report/lmc-" + name + ".csv")).string());
      return curve;
    };
    auto rs_curve = curve_for("retrain_from_scratch", retrained_);
    result_.retrain.barrier = diag::barrier_height(rs_curve);
    lmc_curves_.clear();
    lmc_curves_.push_back(rs_curve);
    for (auto& m : result_.methods) {
      auto curve = curve_for(m.name, *unlearned_ckpt(m.name));
      m.barrier = diag::barrier_height(curve);
      lmc_curves_.push_back(std::move(curve));
    }

    std::vector<std::pair<std::string, const nn::Checkpoint<float>*>> pairs;
    for (const auto& m : result_.methods) pairs.push_back({m.name, unlearned_ckpt(m.name)});
    auto distances = diag::distance_report(pretrained_, pairs, retrained_);
    write_distance_csv((root_ / "report/distances.csv").string(), distances);
    manifest_.record_artifact("diagnostics", "distances",
                              (root_ / "report/distances.csv").string());

    // rank correlations: weight-space movement vs post-relearn(0) recovery
    std::vector<double> dist, barrier, recovery;
    for (const auto& m : result_.methods) {
      const auto* c = ExperimentResult::cell(m, "retain", 0);
      if (c == nullptr) continue;
      dist.push_back(m.distance);
      barrier.push_back(m.barrier);
      recovery.push_back(c->tail.forget_ho_acc - m.unlearn_tail.forget_ho_acc);
    }
    if (dist.size() >= 3) {
      result_.spearman_distance_recovery = diag::spearman(dist, recovery);
      result_.spearman_barrier_recovery = diag::spearman(barrier, recovery);
      result_.better_predictor = result_.spearman_distance_recovery <=
                                         result_.spearman_barrier_recovery
                                     ? "l2_distance"
                                     : "lmc_barrier";
    }
    CsvWriter w((root_ / "report/correlations.csv").string(), "statistic,value");
    w.row({"spearman_distance_vs_recovery", fmt(result_.spearman_distance_recovery)});
    w.row({"spearman_barrier_vs_recovery", fmt(result_.spearman_barrier_recovery)});
    w.row({"better_predictor", result_.better_predictor});
    manifest_.record_artifact("diagnostics", "correlations",
                              (root_ / "report/correlations.csv").string());
  }

  void stage_sweep() {
    if (cfg_.sweep.methods.empty() || cfg_.sweep.epochs_list.empty()) return;
    const std::string path = (root_ / "report/epoch_sweep.csv").string();
    std::vector<std::function<void()>> tasks;
    std::mutex rows_mu;
    for (const auto& method_name : cfg_.sweep.methods) {
      const MethodEntry* entry = nullptr;
      for (const auto& m : cfg_.methods)
        if (m.name == method_name) entry = &m;
      ULAB_CHECK(entry != nullptr, "sweep method not in the method list: " + method_name);
      for (int epochs : cfg_.sweep.epochs_list) {
        tasks.push_back([this, entry, epochs, &rows_mu] {
          unlearn::UnlearnConfig ucfg = entry->cfg;
          ucfg.epochs = epochs;
          ucfg.seed = derive_seed(cfg_.seed, "sweep-" + entry->name,
                                  static_cast<std::uint64_t>(epochs));
          const std::string phase =
              "sweep:" + entry->name + ":" + std::to_string(epochs);
          train::PhaseHooks h;
          h.phase = phase;
          h.audit = audit_enabled_ ? &audit_ : nullptr;
          const nn::Checkpoint<float>* sg =
              entry->safeguard.empty() ? nullptr : unlearned_ckpt(entry->safeguard);
          auto res = unlearn::run_unlearn(*net_, pretrained_, bundle(0), ucfg, std::move(h), sg, sg);

          train::PhaseHooks rh;
          rh.phase = phase + ":relearn";
          rh.audit = audit_enabled_ ? &audit_ : nullptr;
          auto rel = attack::relearn(*net_, res.ckpt, bundle(0), relearn_cfg("retain", 0),
                                     std::move(rh));
          SweepRow row{entry->name, epochs, eval_test(res.ckpt),
                       eval_on(res.ckpt, bundle(0).forget_holdout()), eval_test(rel.ckpt),
                       eval_on(rel.ckpt, bundle(0).forget_holdout())};
          std::lock_guard<std::mutex> lock(rows_mu);
          result_.sweep.push_back(row);
        });
      }
    }
    run_parallel(tasks, cfg_.threads);
    std::sort(result_.sweep.begin(), result_.sweep.end(), [](const SweepRow& a, const SweepRow& b) {
      return a.method != b.method ? a.method < b.method : a.epochs < b.epochs;
    });
    CsvWriter w(path, "method,epochs,unlearn_test,unlearn_forget_ho,relearn_test,relearn_forget_ho");
    for (const auto& r : result_.sweep)
      w.row({r.method, std::to_string(r.epochs), fmt(r.unlearn_test), fmt(r.unlearn_forget_ho),
             fmt(r.relearn_test), fmt(r.relearn_forget_ho)});
    manifest_.record_artifact("sweep", "csv", path);
  }

  void stage_reports();
  void emit_plots();

  // ------------------------------------------------------------------ state

  ExperimentConfig cfg_;
  bool audit_enabled_;
  fs::path root_;
  RunManifest manifest_;
  bool resumed_ = false;
  std::size_t stages_executed_ = 0;
  std::mutex manifest_mu_, data_mu_;

  data::Dataset train_full_, test_, forget_full_;
  data::TypicalityScores train_scores_, test_scores_;
  std::string scores_path_;
  std::map<int, data::DatasetBundle> bundles_;
  nn::ModelSpec spec_;
  std::unique_ptr<nn::Network<float>> net_;
  nn::Checkpoint<float> init_, pretrained_, retrained_;
  std::map<std::string, nn::Checkpoint<float>> unlearned_;
  std::vector<diag::LmcCurve> lmc_curves_;
  data::AccessAudit audit_;
  ExperimentResult result_;

  static data::TypicalityScores load_scores_csv(const std::string& path) {
    std::ifstream f(path);
    ULAB_CHECK(f.good(), "cannot open typicality scores: " + path);
    std::string line;
    std::getline(f, line);
    data::TypicalityScores s;
    s.method = "holdout_consistency";
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto comma = line.find(',');
      s.score.push_back(std::stof(line.substr(comma + 1)));
    }
    return s;
  }

  static void save_scores_csv(const std::string& path, const data::TypicalityScores& s) {
    std::ofstream f(path, std::ios::trunc);
    f << "index,score\n";
    for (std::size_t i = 0; i < s.score.size(); ++i) f << i << ',' << s.score[i] << '\n';
  }
};

inline nlohmann::json outcome_to_json(const MethodOutcome& m) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : m.cells) {
    cells.push_back({{"source", c.source},
                     {"n_relearn", c.n_relearn},
                     {"test_acc", c.tail.test_acc},
                     {"forget_ho_acc", c.tail.forget_ho_acc},
                     {"final_test", c.final_test},
                     {"final_forget_ho", c.final_forget_ho},
                     {"pre_attack_forget_ho", c.pre_attack_forget_ho},
                     {"short_window", c.tail.short_window}});
  }
  nlohmann::json quant = nlohmann::json::array();
  for (const auto& q : m.quant)
    quant.push_back({{"bits", q.bits}, {"test_acc", q.test_acc}, {"forget_ho_acc", q.forget_ho_acc}});
  return {{"name", m.name},
          {"method", m.method},
          {"distance", m.distance},
          {"steps", m.steps},
          {"seconds", m.seconds},
          {"post_unlearn_test", m.post_unlearn_test},
          {"post_unlearn_forget", m.post_unlearn_forget},
          {"unlearn_tail_test", m.unlearn_tail.test_acc},
          {"unlearn_tail_forget", m.unlearn_tail.forget_ho_acc},
          {"relearn", cells},
          {"mia", m.mia_acc},
          {"mia_degenerate", m.mia_degenerate},
          {"quant", quant},
          {"barrier", m.barrier}};
}

inline nlohmann::json ExperimentResult::to_json() const {
  nlohmann::json j;
  j["config_hash"] = hex64(config_hash);
  j["seed"] = seed;
  j["pretrain"] = {{"test_acc", pretrain_test}, {"forget_acc", pretrain_forget},
                   {"mia", pretrain_mia}};
  j["retrain_from_scratch"] = outcome_to_json(retrain);
  j["methods"] = nlohmann::json::array();
  for (const auto& m : methods) j["methods"].push_back(outcome_to_json(m));
  j["sweep"] = nlohmann::json::array();
  for (const auto& r : sweep)
    j["sweep"].push_back({{"method", r.method},
                          {"epochs", r.epochs},
                          {"unlearn_test", r.unlearn_test},
                          {"unlearn_forget_ho", r.unlearn_forget_ho},
                          {"relearn_test", r.relearn_test},
                          {"relearn_forget_ho", r.relearn_forget_ho}});
  j["correlations"] = {{"spearman_distance_vs_recovery", spearman_distance_recovery},
                       {"spearman_barrier_vs_recovery", spearman_barrier_recovery},
                       {"better_predictor", better_predictor}};
  return j;
}

inline void Experiment::stage_reports() {
  result_.config_hash = cfg_.hash();
  result_.seed = cfg_.seed;

  // summary.json: the structured record every downstream consumer reads
  {
    const std::string path = (root_ / "report/summary.json").string();
    std::ofstream f(path, std::ios::trunc);
    f << result_.to_json().dump(2) << '\n';
    manifest_.record_artifact("reports", "summary", path);
  }

  // scatter table: post-unlearn panel plus one panel per attack setting
  {
    const std::string path = (root_ / "report/scatter.csv").string();
    CsvWriter w(path, "name,method,source,n_relearn,test_acc,forget_ho_acc,records,short_window");
    auto emit = [&](const MethodOutcome& m) {
      w.row({m.name, m.method, "post_unlearn", "-1", fmt(m.unlearn_tail.test_acc),
             fmt(m.unlearn_tail.forget_ho_acc), std::to_string(m.unlearn_tail.records),
             m.unlearn_tail.short_window ? "1" : "0"});
      for (const auto& c : m.cells)
        w.row({m.name, m.method, c.source, std::to_string(c.n_relearn), fmt(c.tail.test_acc),
               fmt(c.tail.forget_ho_acc), std::to_string(c.tail.records),
               c.tail.short_window ? "1" : "0"});
    };
    emit(result_.retrain);
    for (const auto& m : result_.methods) emit(m);
    manifest_.record_artifact("reports", "scatter", path);
  }

  if (cfg_.attack.mia) {
    const std::string path = (root_ / "report/mia.csv").string();
    CsvWriter w(path, "name,balanced_accuracy,degenerate");
    w.row({"pretrained", fmt(result_.pretrain_mia), "0"});
    w.row({"retrain_from_scratch", fmt(result_.retrain.mia_acc),
           result_.retrain.mia_degenerate ? "1" : "0"});
    for (const auto& m : result_.methods)
      w.row({m.name, fmt(m.mia_acc), m.mia_degenerate ? "1" : "0"});
    manifest_.record_artifact("reports", "mia", path);
  }

  emit_plots();
}

inline void Experiment::emit_plots() {
  const auto& colors = palette();
  auto color_of = [&](std::size_t i) { return colors[i % colors.size()]; };

  // scatter panels: post-unlearn plus one per retain-source relearn size
  std::vector<std::pair<std::string, int>> panels = {{"post_unlearn", -1}};
  for (int n : cfg_.attack.relearn_sizes) panels.push_back({"retain", n});
  for (const auto& [source, n] : panels) {
    Svg svg(560, 330);
    Frame frame;
    frame.draw(svg, "test accuracy",
               source == "post_unlearn" ? "forget accuracy (post-unlearn)"
                                        : "forget-holdout accuracy (n=" + std::to_string(n) + ")");
    auto point_of = [&](const MethodOutcome& m, double& x, double& y) {
      if (source == "post_unlearn") {
        x = m.unlearn_tail.test_acc;
        y = m.unlearn_tail.forget_ho_acc;
        return true;
      }
      const auto* c = ExperimentResult::cell(m, source, n);
      if (c == nullptr) return false;
      x = c->tail.test_acc;
      y = c->tail.forget_ho_acc;
      return true;
    };
    for (std::size_t i = 0; i < result_.methods.size(); ++i) {
      double x, y;
      if (point_of(result_.methods[i], x, y))
        svg.circle(frame.px(x), frame.py(y), 4, color_of(i));
    }
    {
      double x, y;
      if (point_of(result_.retrain, x, y)) svg.star(frame.px(x), frame.py(y), 6, "black");
    }
    double ly = 26;
    svg.text(400, 14, source == "post_unlearn" ? "post-unlearn" : "relearn n=" + std::to_string(n),
             11);
    for (std::size_t i = 0; i < result_.methods.size(); ++i) {
      svg.circle(392, ly - 3, 4, color_of(i));
      svg.text(400, ly, result_.methods[i].name, 9);
      ly += 13;
    }
    svg.star(392, ly - 3, 5, "black");
    svg.text(400, ly, "retrain_from_scratch", 9);
    const std::string file = source == "post_unlearn" ? "scatter-post_unlearn.svg"
                                                      : "scatter-relearn-n" + std::to_string(n) +
                                                            ".svg";
    const std::string path = (root_ / ("report/" + file)).string();
    svg.save(path);
    manifest_.record_artifact("reports", "plot:" + file, path);
  }

  // LMC curves (test accuracy along the interpolation path)
  {
    Svg svg(560, 330);
    Frame frame;
    frame.draw(svg, "interpolation alpha", "test accuracy");
    double ly = 26;
    for (std::size_t i = 0; i < lmc_curves_.size(); ++i) {
      const auto& curve = lmc_curves_[i];
      std::vector<std::pair<double, double>> pts;
      for (const auto& p : curve.points) pts.push_back({frame.px(p.alpha), frame.py(p.test_acc)});
      const std::string color = i == 0 ? "black" : color_of(i - 1);
      svg.polyline(pts, color, i == 0 ? 2.0 : 1.2);
      svg.text(400, ly, curve.b_label, 9);
      svg.line(385, ly - 3, 397, ly - 3, color, 2);
      ly += 13;
    }
    const std::string path = (root_ / "report/lmc.svg").string();
    svg.save(path);
    manifest_.record_artifact("reports", "plot:lmc.svg", path);
  }

  // distance bar chart (log-free, normalized to the max)
  {
    Svg svg(560, 330);
    double max_dist = result_.retrain.distance;
    for (const auto& m : result_.methods) max_dist = std::max(max_dist, m.distance);
    if (max_dist <= 0) max_dist = 1;
    std::vector<const MethodOutcome*> rows;
    for (const auto& m : result_.methods) rows.push_back(&m);
    std::sort(rows.begin(), rows.end(),
              [](const MethodOutcome* a, const MethodOutcome* b) { return a->name < b->name; });
    const double x0 = 170, w = 330, row_h = 300.0 / (static_cast<double>(rows.size()) + 1.0);
    double y = 16;
    auto bar = [&](const std::string& label, double value, const std::string& color) {
      svg.text(x0 - 6, y + row_h * 0.6, label, 9, "end");
      svg.rect(x0, y + row_h * 0.15, w * (value / max_dist), row_h * 0.7, color);
      svg.text(x0 + w * (value / max_dist) + 4, y + row_h * 0.6, Svg::num(value), 8);
      y += row_h;
    };
    for (std::size_t i = 0; i < rows.size(); ++i) bar(rows[i]->name, rows[i]->distance, color_of(i));
    bar("retrain_from_scratch", result_.retrain.distance, "black");
    const std::string path = (root_ / "report/distances.svg").string();
    svg.save(path);
    manifest_.record_artifact("reports", "plot:distances.svg", path);
  }
}

}  // namespace ulab::exp
