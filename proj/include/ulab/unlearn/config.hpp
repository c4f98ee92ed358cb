#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ulab/core/error.hpp"

namespace ulab::unlearn {

// Shared knobs for every unlearning method plus a method-specific parameter
// object. Fully serializable; unknown parameter keys are rejected at
// dispatch time against the method's declared key set.
struct UnlearnConfig {
  std::string method;
  double lr = 1e-5;
  int epochs = 100;
  double weight_decay = 0.0;
  int batch = 64;
  double floor_factor = 0.1;
  std::uint64_t seed = 0;
  nlohmann::json params = nlohmann::json::object();

  nlohmann::json to_json() const {
    return {{"method", method},       {"lr", lr},
            {"epochs", epochs},       {"weight_decay", weight_decay},
            {"batch", batch},         {"floor_factor", floor_factor},
            {"seed", seed},           {"params", params}};
  }

  static UnlearnConfig from_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {"method", "lr",    "epochs", "weight_decay",
                                                "batch",  "floor_factor", "seed", "params",
                                                "name",   "safeguard"};
    for (auto it = j.begin(); it != j.end(); ++it)
      ULAB_CHECK(known.count(it.key()) == 1, "unknown unlearn config key: " + it.key());
    UnlearnConfig c;
    c.method = j.at("method").get<std::string>();
    c.lr = j.value("lr", 1e-5);
    c.epochs = j.value("epochs", 100);
    c.weight_decay = j.value("weight_decay", 0.0);
    c.batch = j.value("batch", 64);
    c.floor_factor = j.value("floor_factor", 0.1);
    c.seed = j.value("seed", std::uint64_t{0});
    c.params = j.value("params", nlohmann::json::object());
    ULAB_CHECK(c.params.is_object(), "unlearn params must be an object");
    return c;
  }

  double param(const std::string& key, double fallback) const {
    if (!params.contains(key)) return fallback;
    ULAB_CHECK(params.at(key).is_number(), "unlearn param '" + key + "' must be a number");
    return params.at(key).get<double>();
  }
  std::string param_str(const std::string& key, const std::string& fallback) const {
    if (!params.contains(key)) return fallback;
    return params.at(key).get<std::string>();
  }
  bool param_bool(const std::string& key, bool fallback) const {
    if (!params.contains(key)) return fallback;
    ULAB_CHECK(params.at(key).is_boolean(), "unlearn param '" + key + "' must be a boolean");
    return params.at(key).get<bool>();
  }

  void check_param_keys(const std::set<std::string>& allowed) const {
    for (auto it = params.begin(); it != params.end(); ++it)
      ULAB_CHECK(allowed.count(it.key()) == 1,
                 "method '" + method + "' does not accept param '" + it.key() + "'");
  }
};

}  // namespace ulab::unlearn
