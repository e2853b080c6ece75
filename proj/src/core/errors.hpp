// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mcur {

/// Root of every exception thrown by the library. The C API maps each
/// subclass onto one status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition violated by a caller-supplied value.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Configuration file or schema violation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Two artifacts (teacher/student, model/dataset) disagree on shapes.
class IncompatibleError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value or undefined numeric operation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined on the given evaluation set.
class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace mcur
