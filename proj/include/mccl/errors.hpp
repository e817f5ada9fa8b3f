#pragma once

#include <stdexcept>
#include <string>

namespace mccl {

// Malformed or inconsistent on-disk data (short arrays, NaN payloads, bad magic).
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A required input file or directory does not exist.
class MissingPathError : public DataError {
public:
  explicit MissingPathError(const std::string& path)
      : DataError("missing path: " + path), path_(path) {}
  const std::string& path() const noexcept { return path_; }

private:
  std::string path_;
};

// Unknown key in a manifest or config file.
class UnknownKeyError : public std::runtime_error {
public:
  explicit UnknownKeyError(const std::string& key)
      : std::runtime_error("unknown key: " + key), key_(key) {}
  const std::string& key() const noexcept { return key_; }

private:
  std::string key_;
};

// Config values that parse but violate a documented invariant.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace mccl
