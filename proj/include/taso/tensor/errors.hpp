#pragma once

#include <stdexcept>
#include <string>

namespace taso {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated precondition or invalid argument. Maps to CLI exit code 1.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ContractError {
 public:
  using ContractError::ContractError;
};

// NaN/Inf produced or consumed.
class NumericError : public Error {
 public:
  using Error::Error;
};

// File system and decoding failures. Maps to CLI exit code 2.
class IoError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public IoError {
 public:
  using IoError::IoError;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractError(message);
}

}  // namespace taso
