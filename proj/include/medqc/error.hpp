#pragma once

#include <stdexcept>
#include <string>

namespace medqc {

// Exception hierarchy. The CLI maps each kind onto a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input, bad arguments, out-of-range indices. Exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

// A well-formed request that produced nothing usable. Exit code 3.
class EmptyResultError : public Error {
 public:
  using Error::Error;
};

// Non-finite values in logits, losses or gradients. Exit code 4.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Error raised while parsing a line-oriented file.
class ParseError : public InputError {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : InputError(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace medqc
