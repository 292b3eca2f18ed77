#pragma once

#include <stdexcept>
#include <string>

namespace dff {

// Caller passed a value outside an operation's domain.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Shapes or configurations that do not fit together.
class StructuralError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Anything read from disk that is missing, truncated or malformed.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unknown id or resource.
class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Resource is busy, e.g. a scene while it trains.
class ConflictError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dff
