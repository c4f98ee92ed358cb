#pragma once

#include <algorithm>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "ulab/core/error.hpp"

namespace ulab::data {

// Records which example ids each training phase consumed and checks them
// against the phase's declared contract. Evaluation reads are exempt; only
// ids that enter gradient updates are logged. Phases with no registered
// contract fail closed.
class AccessAudit {
 public:
  struct Violation {
    std::string phase;
    std::uint32_t id;
  };

  void allow(const std::string& phase, std::vector<std::uint32_t> ids) {
    std::sort(ids.begin(), ids.end());
    std::lock_guard<std::mutex> lock(mu_);
    for (auto& p : phases_)
      if (p.name == phase) {
        p.allowed = std::move(ids);
        return;
      }
    phases_.push_back({phase, std::move(ids)});
  }

  void log_train_access(const std::string& phase, const std::vector<std::uint32_t>& ids) {
    std::lock_guard<std::mutex> lock(mu_);
    const Phase* p = nullptr;
    for (const auto& ph : phases_)
      if (ph.name == phase) p = &ph;
    for (std::uint32_t id : ids) {
      if (p == nullptr || !std::binary_search(p->allowed.begin(), p->allowed.end(), id))
        violations_.push_back({phase, id});
    }
  }

  bool ok() const {
    std::lock_guard<std::mutex> lock(mu_);
    return violations_.empty();
  }

  std::vector<Violation> violations() const {
    std::lock_guard<std::mutex> lock(mu_);
    return violations_;
  }

  void require_clean() const {
    std::lock_guard<std::mutex> lock(mu_);
    if (violations_.empty()) return;
    const auto& v = violations_.front();
    throw AuditError("access audit violation: phase '" + v.phase + "' trained on example id " +
                     std::to_string(v.id) + " outside its contract (" +
                     std::to_string(violations_.size()) + " violation(s) total)");
  }

 private:
  struct Phase {
    std::string name;
    std::vector<std::uint32_t> allowed;
  };
  mutable std::mutex mu_;
  std::vector<Phase> phases_;
  std::vector<Violation> violations_;
};

}  // namespace ulab::data
