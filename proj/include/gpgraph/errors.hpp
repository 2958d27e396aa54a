#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gpgraph {

// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A group partition is empty, overlapping, or does not cover its universe.
class PartitionError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameter or layer configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Two inputs that should describe the same pedestrians do not.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

// A non-finite value appeared during a forward or backward pass.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::size_t node)
      : Error(what + " (node " + std::to_string(node) + ")"), node_(node) {}
  explicit NumericError(const std::string& what) : Error(what) {}

  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_ = static_cast<std::size_t>(-1);
};

// Malformed input text. Carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Structurally valid text whose content violates a format rule.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid combination of arguments.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Missing or unreadable file.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace gpgraph
