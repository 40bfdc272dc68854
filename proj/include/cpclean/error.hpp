#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace cpclean {

enum class ErrorKind {
  invalid_argument,  // caller violated a precondition
  parse,             // malformed input file or payload
  limit,             // refused to do work beyond a configured limit
  conflict,          // state-machine misuse (stale answer, nothing to clean)
  not_found,
  io,
};

// Single exception type for the library. `field` names the offending input
// location when one exists (a JSON path, "row 3 column x", ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message, std::string field = {})
      : std::runtime_error(std::move(message)), kind_(kind), field_(std::move(field)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorKind kind_;
  std::string field_;
};

[[noreturn]] inline void fail(ErrorKind kind, std::string message, std::string field = {}) {
  throw Error(kind, std::move(message), std::move(field));
}

inline void require(bool condition, const char* message) {
  if (!condition) fail(ErrorKind::invalid_argument, message);
}

}  // namespace cpclean
