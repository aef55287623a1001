#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace achord {

// Argument outside the mathematical domain of an operation (d <= 0, negative SNR, ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Regression input without enough distinct distances to determine a slope.
class DegenerateFitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Node id that is not part of the graph being queried.
class UnknownNodeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Route that references a link which is absent from the topology.
class BrokenRouteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownTopicError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class MalformedDatagramError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VersionMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid input document. Carries every violation found, not just the first.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<std::string> violations)
      : std::runtime_error(join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) {
      if (!out.empty()) out += "; ";
      out += s;
    }
    return out;
  }

  std::vector<std::string> violations_;
};

// Event log missing its start/end records.
class TruncatedLogError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Behavior with no admissible target (no Strong checkpoint and no reachable base).
class NoCommsTargetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace achord
