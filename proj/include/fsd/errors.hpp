#pragma once

#include <stdexcept>
#include <string>

namespace fsd {

/// Bad or missing configuration value. The message names the offending key.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem / stream failure (unreadable file, short write, bad magic).
class IoError : public std::runtime_error {
  public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fsd
