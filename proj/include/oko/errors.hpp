#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace oko {

// Malformed arguments: shapes, ranges, non-finite inputs.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A sampler cannot honor its constraints (empty class, pair class with < 2 members).
class SamplingInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A class quota exceeds the number of available samples.
class InsufficientData : public std::runtime_error {
 public:
  InsufficientData(int cls, std::size_t wanted, std::size_t available)
      : std::runtime_error("class " + std::to_string(cls) + " needs " + std::to_string(wanted) +
                           " samples but only " + std::to_string(available) + " are available"),
        class_index(cls) {}
  int class_index;
};

// NaN/Inf appeared where only finite values are allowed (e.g. an optimizer step).
class NumericFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exhaustive enumeration would exceed its row budget.
class TooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConvergenceFailure : public std::runtime_error {
 public:
  ConvergenceFailure(const std::string& what, std::string trace_)
      : std::runtime_error(what), trace(std::move(trace_)) {}
  std::string trace;
};

// A theory check found a counterexample.
class PropertyFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Configuration rejected; `violations` lists every problem found, not just the first.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<std::string> v)
      : std::runtime_error(join(v)), violations(std::move(v)) {}
  std::vector<std::string> violations;

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid configuration:";
    for (const auto& s : v) out += "\n  - " + s;
    return out;
  }
};

enum class IdxErrorKind { kOpen, kMagic, kTruncated, kCountMismatch, kDimension };

class IdxParseError : public std::runtime_error {
 public:
  IdxParseError(IdxErrorKind k, const std::string& what) : std::runtime_error(what), kind(k) {}
  IdxErrorKind kind;
};

}  // namespace oko
