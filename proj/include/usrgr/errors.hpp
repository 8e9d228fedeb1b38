#pragma once

#include <stdexcept>
#include <string>

namespace usrgr {

// Shape/contract violations on tensor operations.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// File format / filesystem problems. `code` distinguishes the documented cases.
class IoError : public std::runtime_error {
 public:
  enum class Code { generic, bad_magic, truncated_payload, unknown_dtype, unknown_version };

  IoError(Code code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  explicit IoError(const std::string& msg) : std::runtime_error(msg), code_(Code::generic) {}

  Code code() const { return code_; }

 private:
  Code code_;
};

// NaN/Inf or divergence during numeric work.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration keys/values.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace usrgr
