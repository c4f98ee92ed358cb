// Command-line front end: one declarative config drives the full pipeline
// (pretrain -> unlearn -> attacks -> diagnostics -> reports), with
// subcommands that stop after earlier stages. Completed stages are resumed
// from the output directory's manifest.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "ulab/exp/orchestrator.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  std::string preset;
  std::int64_t seed = -1;
  int threads = 0;
};

ulab::exp::ExperimentConfig resolve_config(const CliOptions& opt) {
  nlohmann::json doc = nlohmann::json::object();
  if (!opt.config_path.empty()) {
    std::ifstream f(opt.config_path);
    if (!f.good()) throw ulab::ConfigError("cannot open config file: " + opt.config_path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const bool is_json = opt.config_path.size() >= 5 &&
                         opt.config_path.substr(opt.config_path.size() - 5) == ".json";
    try {
      doc = is_json ? nlohmann::json::parse(text) : ulab::exp::toml::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ulab::ConfigError(std::string("config parse error: ") + e.what());
    }
  }
  if (!opt.preset.empty()) doc["preset"] = opt.preset;
  if (opt.seed >= 0) doc["seed"] = static_cast<std::uint64_t>(opt.seed);
  if (!opt.out_dir.empty()) doc["out"] = opt.out_dir;
  if (opt.threads > 0) doc["threads"] = opt.threads;
  return ulab::exp::config_from_json(doc);
}

int run_until(const CliOptions& opt, ulab::exp::Experiment::Stage until) {
  using ulab::exp::Experiment;
  auto cfg = resolve_config(opt);
  Experiment experiment(cfg);
  std::printf("ulab: out=%s preset=%s seed=%llu threads=%d%s\n", cfg.out_dir.c_str(),
              cfg.preset.c_str(), static_cast<unsigned long long>(cfg.seed), cfg.threads,
              experiment.resumed() ? " (resuming)" : "");
  const auto& result = experiment.run(until);
  std::printf("ulab: %zu stage(s) executed, manifest at %s\n", experiment.stages_executed(),
              experiment.manifest_path().c_str());
  if (until == Experiment::Stage::reports) {
    std::printf("ulab: pretrain test=%.3f forget=%.3f | retrain test=%.3f forget=%.3f\n",
                result.pretrain_test, result.pretrain_forget, result.retrain.post_unlearn_test,
                result.retrain.post_unlearn_forget);
    std::printf("ulab: spearman(distance, recovery)=%.3f barrier(retrain)=%.3f\n",
                result.spearman_distance_recovery, result.retrain.barrier);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale unlearning laboratory"};
  app.require_subcommand(1);

  CliOptions opt;
  app.add_option("--config", opt.config_path, "experiment config (.toml or .json)");
  app.add_option("--out", opt.out_dir, "output directory (overrides config)");
  app.add_option("--seed", opt.seed, "experiment seed (overrides config)");
  app.add_option("--preset", opt.preset, "hyperparameter preset: desk | paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--threads", opt.threads, "parallel branches for independent stages");

  using Stage = ulab::exp::Experiment::Stage;
  Stage until = Stage::reports;
  app.add_subcommand("run", "full pipeline: data to reports")
      ->callback([&] { until = Stage::reports; });
  app.add_subcommand("pretrain", "build data and train the base model")
      ->callback([&] { until = Stage::pretrain; });
  app.add_subcommand("unlearn", "run the configured unlearning methods")
      ->callback([&] { until = Stage::unlearn; });
  app.add_subcommand("attack", "relearning, quantization and MIA attacks")
      ->callback([&] { until = Stage::attacks; });
  app.add_subcommand("diagnose", "weight-space diagnostics")
      ->callback([&] { until = Stage::diagnostics; });
  app.add_subcommand("sweep", "unlearning epoch-budget sweep")
      ->callback([&] { until = Stage::sweep; });
  app.add_subcommand("plot", "emit report tables and SVG plots")
      ->callback([&] { until = Stage::reports; });

  CLI11_PARSE(app, argc, argv);

  try {
    return run_until(opt, until);
  } catch (const ulab::AuditError& e) {
    std::fprintf(stderr, "ulab: audit violation: %s\n", e.what());
    return 4;
  } catch (const ulab::ConfigError& e) {
    std::fprintf(stderr, "ulab: config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ulab: %s\n", e.what());
    return 3;
  }
}
