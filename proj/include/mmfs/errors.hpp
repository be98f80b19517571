// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mmfs {

/// Base of every library error. `exit_code` is the CLI status it maps to.
class Error : public std::runtime_error {
 public:
  Error(const std::string& what, int exit_code) : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const { return exit_code_; }

 private:
  int exit_code_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(what, 1) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, 1) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what, 2) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what, 2) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(what, 3) {}
};

class InsufficientClassPool : public DataError {
 public:
  using DataError::DataError;
};

class InsufficientVideos : public DataError {
 public:
  InsufficientVideos(const std::string& what, int class_id) : DataError(what), class_id_(class_id) {}
  int class_id() const { return class_id_; }

 private:
  int class_id_;
};

class EmptySupportMask : public DataError {
 public:
  using DataError::DataError;
};

class PromptTooLong : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace mmfs
