#pragma once
#include <stdexcept>
#include <string>

namespace cdkit {

// Invalid or inconsistent configuration. Messages carry the field path
// ("gen.change_rate: must be in [0,1]") so callers can surface it verbatim.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem reads/writes that failed; message names the path.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// A required upstream artifact (checkpoint, manifest) is absent.
class MissingArtifactError : public std::runtime_error {
 public:
  explicit MissingArtifactError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cdkit
