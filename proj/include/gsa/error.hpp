#pragma once

#include <stdexcept>
#include <string>

namespace gsa {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameters, architecture settings or config files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Label or element index outside its valid range.
class IndexError : public Error {
 public:
  using Error::Error;
};

// Caller violated an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed tensor, label or checkpoint file.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite cost during training.
class DivergenceError : public Error {
 public:
  DivergenceError(int epoch, const std::string& what)
      : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace gsa
