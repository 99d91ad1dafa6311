#pragma once

#include <stdexcept>
#include <string>

namespace s2df {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input geometry has no extent, no area, or is otherwise unusable.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// A caller-side contract was violated (missing normals, dimension mismatch, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Malformed file or configuration text.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Query on the cut locus / medial axis of an analytic primitive.
class NonDifferentiable : public Error {
 public:
  using Error::Error;
};

/// A loss term or optimizer quantity became non-finite.
class NumericalFailure : public Error {
 public:
  NumericalFailure(std::string term, const std::string& what)
      : Error(what), term_(std::move(term)) {}

  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

}  // namespace s2df
