// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace foldpc {

enum class ErrorKind {
  invalid_argument,
  parse,
  io,
  numeric,
  checksum,
  external_codec,
  determinism,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::parse: return "parse error";
    case ErrorKind::io: return "I/O error";
    case ErrorKind::numeric: return "numeric error";
    case ErrorKind::checksum: return "checksum mismatch";
    case ErrorKind::external_codec: return "external codec error";
    case ErrorKind::determinism: return "determinism violation";
  }
  return "error";
}

/// Every failure in the library surfaces as this exception; `kind()` drives
/// CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorKind::invalid_argument, what);
}

}  // namespace foldpc
