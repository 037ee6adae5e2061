#pragma once

#include <stdexcept>
#include <string>

namespace outbreak {

/// A configuration or argument value outside its documented domain.
class ParameterError : public std::invalid_argument {
 public:
  explicit ParameterError(const std::string& what) : std::invalid_argument(what) {}
};

/// An operation applied to an object in the wrong lifecycle state.
class StateError : public std::logic_error {
 public:
  explicit StateError(const std::string& what) : std::logic_error(what) {}
};

/// The per-timestep test budget was exceeded. Raised only when an allocation
/// contract upstream has been broken; callers should treat it as fatal.
class BudgetViolation : public std::logic_error {
 public:
  explicit BudgetViolation(const std::string& what) : std::logic_error(what) {}
};

/// A fixed-capacity structure (observation slots, session table) is full.
class CapacityError : public std::runtime_error {
 public:
  explicit CapacityError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed caller input (duplicate keys, unreadable files, bad documents).
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace outbreak
