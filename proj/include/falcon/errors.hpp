#pragma once

#include <stdexcept>
#include <string>

namespace falcon {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed declarations, bad flags, unparsable files. The CLI maps these to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An argument lies outside the operation's domain (unknown id, overlapping sets, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Missing or inconsistent benchmark data.
class DataError : public Error {
 public:
  using Error::Error;
};

// A single design could not be evaluated. Search records it as a failed design.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  NumericError(const std::string& what, int layer) : Error(what), layer_(layer) {}
  int layer() const { return layer_; }

 private:
  int layer_;
};

class SearchAborted : public Error {
 public:
  using Error::Error;
};

}  // namespace falcon
