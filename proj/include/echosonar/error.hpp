#pragma once

#include <stdexcept>
#include <string>

namespace echosonar {

/// Base of every error thrown by the library. The CLI prints `what()` as its
/// one-line diagnostic.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Filter design that cannot be realized (cutoff at/above Nyquist, unstable poles).
class DesignError : public Error {
 public:
  using Error::Error;
};

/// Recording with no usable correlation peak.
class NoSignalError : public Error {
 public:
  using Error::Error;
};

/// Not enough samples or frames for the requested operation.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// Hand pose whose palm frame or finger chains are undefined.
class DegeneratePoseError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable input file.
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// Timestamps that cannot be paired within tolerance.
class PairingError : public Error {
 public:
  using Error::Error;
};

/// Evaluation protocol that cannot be satisfied by the given sessions.
class SplitError : public Error {
 public:
  using Error::Error;
};

}  // namespace echosonar
