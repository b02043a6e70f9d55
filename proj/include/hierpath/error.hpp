// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hierpath {

// Exit-code classes used by the CLI: contract = 1, io = 2, numeric = 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class CheckpointCorrupt : public IoError {
 public:
  using IoError::IoError;
};

class CheckpointVersionError : public ContractError {
 public:
  using ContractError::ContractError;
};

class DigestMismatch : public ContractError {
 public:
  using ContractError::ContractError;
};

}  // namespace hierpath
