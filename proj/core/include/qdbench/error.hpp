// Copyright 2026 The qdbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace qdbench {

/// Root of the library's exception hierarchy. Every error the library throws
/// derives from this type, so callers that only need a message can catch it.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Synthetic-generator parameters violate an invariant. The message names it.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Label or pixel data outside its domain (e.g. a state id not in 0..4).
class DataError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid run or training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Dataset directory could not be read. Carries the offending file and field.
class IngestionError : public Error {
 public:
  IngestionError(std::string file, std::string field, const std::string& what)
      : Error(file + (field.empty() ? "" : ": " + field) + ": " + what),
        file_(std::move(file)),
        field_(std::move(field)) {}

  const std::string& file() const noexcept { return file_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string file_;
  std::string field_;
};

class ScheduleError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss, nonpositive scale, or similar numerical-domain failure.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Inputs to a loss or metric are not probability rows of matching shape.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace qdbench
