#pragma once

#include <stdexcept>
#include <string>

namespace stddp {

// Base for every failure raised by the library. `is_input_error()` separates
// bad user input (exit code 2 in the CLI) from internal failures.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, bool input_error = false)
      : std::runtime_error(what), input_error_(input_error) {}
  bool is_input_error() const noexcept { return input_error_; }

 private:
  bool input_error_;
};

class ShapeMismatch : public Error {
 public:
  explicit ShapeMismatch(const std::string& what) : Error("shape mismatch: " + what, true) {}
};

class DegenerateGeometry : public Error {
 public:
  explicit DegenerateGeometry(const std::string& what)
      : Error("degenerate geometry: " + what, true) {}
};

class EmptyCorpus : public Error {
 public:
  explicit EmptyCorpus(const std::string& what) : Error("empty corpus: " + what, true) {}
};

class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& what) : Error(what, true) {}
};

class TraceMismatch : public Error {
 public:
  explicit TraceMismatch(const std::string& what) : Error("trace mismatch: " + what) {}
};

class TruthMissing : public Error {
 public:
  explicit TruthMissing(const std::string& what) : Error("truth missing: " + what) {}
};

class EmptyTrainSet : public Error {
 public:
  EmptyTrainSet() : Error("training split contains no samples", true) {}
};

}  // namespace stddp
