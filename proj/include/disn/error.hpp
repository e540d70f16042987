// Copyright (c) 2026 The disn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace disn {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Errors a user can fix by changing inputs or configuration. The CLI maps
// these to exit code 1; everything else derived from Error maps to 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigMismatchError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class BatchStructureError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DegenerateBatchError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DatasetError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyDatasetError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

class ProtocolError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ProbeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// File-format problems.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class HeaderError : public FormatError {
 public:
  using FormatError::FormatError;
};

class DimensionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  TruncatedError(const std::string& what, std::size_t record)
      : FormatError(what), record_(record) {}
  std::size_t record() const noexcept { return record_; }

 private:
  std::size_t record_;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class CorruptTensorError : public FormatError {
 public:
  using FormatError::FormatError;
};

class MissingTensorError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Runtime failures (exit code 2).
class NumericError : public Error {
 public:
  using Error::Error;
};

class ScoringError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace disn
