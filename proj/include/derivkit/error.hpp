#pragma once

#include <stdexcept>
#include <string>

namespace derivkit {

// Every failure the library reports derives from Error. The CLI maps each
// subclass onto a distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: syntax errors, unknown identifiers, shape mismatches.
class InputError : public Error {
 public:
  using Error::Error;
};

class ParseError : public InputError {
 public:
  ParseError(std::string message, std::size_t position)
      : InputError(message + " at position " + std::to_string(position)),
        position_(position) {}

  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

// Evaluation outside the domain of a function, or a singular matrix.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A requested special frame cannot exist at the given locus.
class ExistenceError : public Error {
 public:
  using Error::Error;
};

// Neighborhood construction requested for a derivation with curvature.
class FlatnessError : public Error {
 public:
  FlatnessError(const std::string& message, double obstruction)
      : Error(message), obstruction_(obstruction) {}

  double obstruction() const { return obstruction_; }

 private:
  double obstruction_;
};

}  // namespace derivkit
