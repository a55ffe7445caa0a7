#pragma once

#include <stdexcept>
#include <string>

namespace cpd {

// Failure categories. The CLI maps each one to a distinct exit status.
enum class ErrorKind {
  InvalidArgument,
  ShapeMismatch,
  NumericalFailure,
  MissingCheckpoint,
  DigestMismatch,
  MalformedConfig,
  MalformedFile,
  Untrained,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace cpd
