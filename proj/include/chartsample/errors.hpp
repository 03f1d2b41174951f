#pragma once

#include <stdexcept>
#include <string>

namespace chartsample {

/// Value outside a fixed sampling domain (ratio out of range, empty bin, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Caller supplied arguments that violate an operation's preconditions.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Chart geometry does not fit the canvas or the configured constraints.
class RenderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or other numerical failure while fitting the learner.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem or format failure while reading/writing artifacts.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace chartsample
