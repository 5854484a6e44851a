#pragma once

#include <stdexcept>
#include <string>

namespace occage {

// Invalid input, shape or configuration. The CLI maps this to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// File system and codec failures. The CLI maps this to exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

}  // namespace occage
