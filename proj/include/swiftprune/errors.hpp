#pragma once

#include <stdexcept>
#include <string>

namespace swiftprune {

enum class ErrorKind {
  io,
  format,      // bad magic / version / header
  truncation,  // payload length disagrees with declared shape
  data,        // non-finite element
  domain,      // argument outside the function's mathematical domain
  range,       // parameter outside its allowed interval
  structure,   // N:M or packing invariant violated
  dimension,   // shape mismatch between operands
  config,      // unknown key, malformed value
  numerical,   // guard escalation (non-finite score, singular oracle matrix)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

const char* to_string(ErrorKind kind) noexcept;

/// CLI exit status: 2 dimension/config, 3 format, 4 numerical guard.
int exit_code_for(ErrorKind kind) noexcept;

}  // namespace swiftprune
