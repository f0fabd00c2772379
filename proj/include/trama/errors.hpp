#pragma once

#include <stdexcept>
#include <string>

namespace trama {

/// Invalid configuration: bad dimensions, out-of-range hyperparameters, malformed task sets.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition.
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A stored object no longer satisfies its invariant.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite values reached a computation that requires finite input.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Quantized indices were produced by an older codebook version.
class StalenessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A checkpoint was written by an incompatible format version.
class VersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace trama
