#pragma once

#include <stdexcept>
#include <string>

namespace cascade {

// Invalid arguments are reported with std::invalid_argument. The types below
// cover the remaining failure classes the CLI maps onto exit codes.

/// Raised when a training loss becomes non-finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A prerequisite checkpoint (named by stage) is missing.
class DependencyError : public std::runtime_error {
 public:
  DependencyError(std::string stage, const std::string& what)
      : std::runtime_error(what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cascade
