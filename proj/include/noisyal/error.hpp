#pragma once

#include <stdexcept>
#include <string>

namespace noisyal {

enum class ErrorKind {
  kInvalidArgument,
  kParse,
  kConfig,
  kMissingArtifact,
  kNumerical,
  kIo,
  kTimeout,
  kConflict,
};

/// Library-wide exception. The kind selects the CLI exit code and the HTTP
/// status used by the annotation service.
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

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(ErrorKind::kInvalidArgument, message);
}

}  // namespace noisyal
