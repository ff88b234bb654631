#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ooc {

enum class ErrorKind {
  format,           // malformed file contents
  alignment,        // ids do not line up with matrix rows
  validation,       // value violates a domain invariant
  missing_id,       // id not present in a store or mapping
  degenerate,       // input that admits no meaningful result (zero rows)
  argument,         // caller passed an out-of-range argument
  insufficient,     // not enough candidates to draw from
  divergence,       // training produced a non-finite loss
  undefined_metric, // metric undefined for the input (single class)
  config,           // bad run configuration
  io,               // file could not be opened / written
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace ooc
