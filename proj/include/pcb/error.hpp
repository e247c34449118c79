#pragma once

#include <stdexcept>
#include <string>

namespace pcb {

// Base for every error raised by the library. Subclasses map onto the
// CLI exit codes (usage/config -> 1, data -> 2, training abort -> 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values (ratios, learning rates, distributions).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Caller violated an operation's precondition.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Shape mismatch between tensors; the message carries both shapes.
class DimensionError : public UsageError {
 public:
  using UsageError::UsageError;
};

// Malformed or out-of-range input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Metric undefined on the given labels (e.g. AUROC with one class).
class UndefinedMetricError : public DataError {
 public:
  using DataError::DataError;
};

// Training diverged (non-finite loss) and was stopped.
class TrainingAborted : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public DataError {
 public:
  enum class Kind { kUnsupportedVersion, kTruncated, kChecksum, kFormat, kIo };

  CheckpointError(Kind kind, const std::string& message)
      : DataError(message), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace pcb
