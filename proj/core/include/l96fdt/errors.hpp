#pragma once

#include <stdexcept>
#include <string>

namespace l96fdt {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input vector has the wrong length for the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input state or parameters violate a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Two curves or accumulators do not share the same grid.
class GridError : public Error {
 public:
  using Error::Error;
};

/// An accumulator was finalized without receiving any samples.
class EmptyStreamError : public Error {
 public:
  using Error::Error;
};

/// A trajectory produced a non-finite state.
class BlowUpError : public Error {
 public:
  BlowUpError(double time, double max_abs)
      : Error("trajectory blew up at t=" + std::to_string(time) +
              " (max |state| = " + std::to_string(max_abs) + ")"),
        time_(time),
        max_abs_(max_abs) {}

  double time() const { return time_; }
  double max_abs() const { return max_abs_; }

 private:
  double time_;
  double max_abs_;
};

/// Time series too short or too degenerate to produce the requested statistic.
class DegenerateVarianceError : public Error {
 public:
  using Error::Error;
};

/// Configuration file or flag problem.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A loaded artifact disagrees with the configuration of the requesting run.
class ConfigConflictError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Serialized artifact failed its integrity check.
class ChecksumError : public Error {
 public:
  using Error::Error;
};

/// Serialized artifact has an unsupported format version.
class VersionError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure while reading or writing artifacts.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace l96fdt
