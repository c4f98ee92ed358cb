#pragma once

#include <stdexcept>
#include <string>

namespace ulab {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid user-facing configuration (CLI exit code 2).
struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(what) {}
};

// Data-contract violation detected by the access audit (CLI exit code 4).
struct AuditError : Error {
  explicit AuditError(const std::string& what) : Error(what) {}
};

#define ULAB_CHECK(cond, msg)                       \
  do {                                              \
    if (!(cond)) throw ::ulab::Error(msg);          \
  } while (0)

}  // namespace ulab
