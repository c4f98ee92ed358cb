#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "ulab/core/error.hpp"
#include "ulab/core/hash.hpp"

namespace ulab::exp {

// Run ledger: which stages completed and where their artifacts live.
// A stage is resumable when its status is "done", the config hash matches
// and every referenced file still exists.
class RunManifest {
 public:
  RunManifest() { doc_["stages"] = nlohmann::json::object(); doc_["artifacts"] = nlohmann::json::object(); }

  static RunManifest fresh(std::uint64_t config_hash, std::uint64_t seed,
                           const nlohmann::json& config, const std::string& version) {
    RunManifest m;
    m.doc_["tool_version"] = version;
    m.doc_["config_hash"] = hex64(config_hash);
    m.doc_["seed"] = seed;
    m.doc_["config"] = config;
    return m;
  }

  static RunManifest load(const std::string& path) {
    std::ifstream f(path);
    ULAB_CHECK(f.good(), "cannot open manifest: " + path);
    RunManifest m;
    f >> m.doc_;
    ULAB_CHECK(m.doc_.contains("stages") && m.doc_.contains("artifacts"),
               "malformed manifest: " + path);
    return m;
  }

  void save(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
      std::ofstream f(tmp, std::ios::trunc);
      ULAB_CHECK(f.good(), "cannot write manifest: " + path);
      f << doc_.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
  }

  bool matches(std::uint64_t config_hash) const {
    return doc_.value("config_hash", std::string{}) == hex64(config_hash);
  }

  bool stage_done(const std::string& stage) const {
    const auto& stages = doc_.at("stages");
    if (!stages.contains(stage) || stages.at(stage) != "done") return false;
    // every artifact recorded under this stage must still exist
    const std::string prefix = stage + ":";
    for (auto it = doc_.at("artifacts").begin(); it != doc_.at("artifacts").end(); ++it) {
      if (it.key().rfind(prefix, 0) == 0 &&
          !std::filesystem::exists(it.value().get<std::string>()))
        return false;
    }
    return true;
  }

  void mark_done(const std::string& stage) { doc_["stages"][stage] = "done"; }
  void mark_failed(const std::string& stage, const std::string& why) {
    doc_["stages"][stage] = "failed: " + why;
  }

  void record_artifact(const std::string& stage, const std::string& name,
                       const std::string& path) {
    doc_["artifacts"][stage + ":" + name] = path;
  }

  std::string artifact(const std::string& stage, const std::string& name) const {
    const std::string key = stage + ":" + name;
    ULAB_CHECK(doc_.at("artifacts").contains(key), "manifest has no artifact " + key);
    return doc_.at("artifacts").at(key).get<std::string>();
  }

  // Every referenced file exists and the config hash matches.
  void validate(std::uint64_t config_hash) const {
    ULAB_CHECK(matches(config_hash), "manifest config hash does not match the config");
    for (auto it = doc_.at("artifacts").begin(); it != doc_.at("artifacts").end(); ++it)
      ULAB_CHECK(std::filesystem::exists(it.value().get<std::string>()),
                 "manifest references a missing file: " + it.value().get<std::string>());
  }

  const nlohmann::json& json() const { return doc_; }

 private:
  nlohmann::json doc_;
};

}  // namespace ulab::exp
