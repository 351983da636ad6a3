#pragma once

#include <stdexcept>
#include <string>

namespace dmg {

// Base of everything the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable or malformed raster, or a pixel that does not decode to a category.
class MaskFormatError : public Error {
 public:
  using Error::Error;
};

// Caller broke an operation's precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Inputs that should describe the same mask disagree with each other.
class InconsistentInput : public Error {
 public:
  using Error::Error;
};

// Generated text failed the groundedness check against its statistics.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ManifestError : public Error {
 public:
  using Error::Error;
};

// Failure talking to an external text or embedding service.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool retryable, int attempts = 1)
      : Error(what), retryable_(retryable), attempts_(attempts) {}

  bool retryable() const noexcept { return retryable_; }
  int attempts() const noexcept { return attempts_; }

 private:
  bool retryable_;
  int attempts_;
};

}  // namespace dmg
