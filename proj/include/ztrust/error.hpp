#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ztrust {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed input. `field` is a dotted path into the offending structure.
class ValidationError : public Error {
public:
  ValidationError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

// An observation that has probability zero under every type with positive
// prior mass. Carries the index of the offending log entry when replaying.
class InconsistentObservation : public Error {
public:
  explicit InconsistentObservation(const std::string& what, std::size_t index = 0)
      : Error(what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

private:
  std::size_t index_;
};

// A solver size guard rejected the input.
class GuardError : public Error {
public:
  GuardError(std::string subject, const std::string& what)
      : Error(subject + ": " + what), subject_(std::move(subject)) {}
  const std::string& subject() const noexcept { return subject_; }

private:
  std::string subject_;
};

inline void require(bool cond, const std::string& field, const std::string& what) {
  if (!cond) throw ValidationError(field, what);
}

}  // namespace ztrust
