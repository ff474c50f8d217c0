#include "swiftprune/errors.hpp"

namespace swiftprune {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::io: return "io";
    case ErrorKind::format: return "format";
    case ErrorKind::truncation: return "truncation";
    case ErrorKind::data: return "data";
    case ErrorKind::domain: return "domain";
    case ErrorKind::range: return "range";
    case ErrorKind::structure: return "structure";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::config: return "config";
    case ErrorKind::numerical: return "numerical";
  }
  return "unknown";
}

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::dimension:
    case ErrorKind::config:
    case ErrorKind::range:
    case ErrorKind::domain:
      return 2;
    case ErrorKind::io:
    case ErrorKind::format:
    case ErrorKind::truncation:
    case ErrorKind::data:
    case ErrorKind::structure:
      return 3;
    case ErrorKind::numerical:
      return 4;
  }
  return 1;
}

}  // namespace swiftprune
