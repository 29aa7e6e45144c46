#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dwf {

/// Error categories. Each maps onto one CLI exit code.
enum class ErrorKind {
  Config,       // invalid configuration or precondition
  Shape,        // dimension mismatch
  Numeric,      // NaN/Inf in a loss or forward pass
  Diverged,     // non-finite parameter update during training
  Convergence,  // iterative solver hit its iteration cap
  Init,         // initialization rejection loop exhausted
  Data,         // data files missing, truncated or inconsistent
  Format,       // bad magic number / unsupported file version
  Pruning,      // e.g. a pruning target that collapses a whole layer
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Diverged: return "diverged";
    case ErrorKind::Convergence: return "convergence";
    case ErrorKind::Init: return "init";
    case ErrorKind::Data: return "data";
    case ErrorKind::Format: return "format";
    case ErrorKind::Pruning: return "pruning";
  }
  return "unknown";
}

/// Exit codes: 2 config, 3 numeric divergence, 4 data.
constexpr int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Numeric:
    case ErrorKind::Diverged:
    case ErrorKind::Convergence:
      return 3;
    case ErrorKind::Data:
    case ErrorKind::Format:
      return 4;
    default:
      return 2;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(message), kind_(kind), index_(index) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Offending layer index, step index or similar, when the error has one.
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> index_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message,
                              std::optional<std::size_t> index = std::nullopt) {
  throw Error(kind, message, index);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace dwf
