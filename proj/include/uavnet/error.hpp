#pragma once

#include <stdexcept>
#include <string>

namespace uavnet {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration (bad ranges, malformed graph, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

inline void require(bool ok, const std::string& message) {
  if (!ok) throw Error(message);
}

inline void require_config(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace uavnet
