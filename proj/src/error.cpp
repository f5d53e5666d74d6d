#include "cmdkit/error.hpp"

namespace cmdkit {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Format: return "format error";
    case ErrorKind::Index: return "index error";
    case ErrorKind::Data: return "data error";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Schema: return "schema error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::Degenerate: return "degenerate data";
    case ErrorKind::Undefined: return "undefined correlation";
  }
  return "error";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Schema:
    case ErrorKind::Shape:
      return 2;
    case ErrorKind::Divergence:
    case ErrorKind::Numeric:
      return 3;
    case ErrorKind::Degenerate:
    case ErrorKind::Undefined:
      return 4;
    case ErrorKind::Format:
    case ErrorKind::Index:
    case ErrorKind::Data:
    case ErrorKind::Io:
      return 5;
  }
  return 1;
}

}  // namespace cmdkit
