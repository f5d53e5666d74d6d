#pragma once

#include <stdexcept>
#include <string>

namespace cmdkit {

enum class ErrorKind {
  Format,      // bad magic, version or malformed payload
  Index,       // layer index inconsistent with the matrix
  Data,        // non-finite values
  Io,          // unreadable / unwritable path
  Config,      // invalid configuration or arguments
  Schema,      // JSON document does not match the expected schema
  Shape,       // operand dimensions disagree
  Divergence,  // a generator blew up
  Numeric,     // numerical routine failure
  Degenerate,  // not enough usable (nonconstant) data
  Undefined,   // correlation of a zero-variance trajectory
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// CLI exit status for an error kind: 2 usage/config, 3 numeric divergence,
/// 4 degenerate data, 5 I/O.
int exit_code(ErrorKind kind) noexcept;

}  // namespace cmdkit
