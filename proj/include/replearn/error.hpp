#pragma once

#include <stdexcept>
#include <string>

namespace replearn {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite entries, shape mismatches, out-of-range parameters.
class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& what) : Error("invalid input: " + what) {}
};

// A solve that needs an invertible matrix received a numerically singular one.
class SingularMatrix : public Error {
 public:
  SingularMatrix(const std::string& what, double condition_number)
      : Error("singular matrix: " + what + " (condition number " +
              std::to_string(condition_number) + ")"),
        condition_number_(condition_number) {}
  double condition_number() const noexcept { return condition_number_; }

 private:
  double condition_number_;
};

// Ground-truth sampling could not satisfy its constraints within the retry budget.
class GenerationError : public Error {
 public:
  explicit GenerationError(const std::string& what) : Error("generation failed: " + what) {}
};

class InfeasibleFit : public Error {
 public:
  explicit InfeasibleFit(const std::string& what) : Error("infeasible fit: " + what) {}
};

// A hidden unit with zero input weights but a nonzero output weight cannot be rebalanced.
class DegenerateNeuron : public Error {
 public:
  explicit DegenerateNeuron(const std::string& what) : Error("degenerate neuron: " + what) {}
};

}  // namespace replearn
