#pragma once

#include <stdexcept>
#include <string>

namespace xeml {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents disagree with an operation's contract.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Use of a consumed tape, a stale node handle, or a foreign tape.
class TapeError : public Error {
 public:
  using Error::Error;
};

/// A caller-side precondition was violated (non-scalar loss, missing grads).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Class label outside [0, N).
class LabelError : public Error {
 public:
  using Error::Error;
};

/// Support labels are not exactly K per class.
class EpisodeShapeError : public Error {
 public:
  using Error::Error;
};

/// Train-mode batchnorm over a single value per channel.
class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (also mapped to CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Domains do not share one class set.
class HomogeneityError : public Error {
 public:
  using Error::Error;
};

/// Unreadable or malformed input file.
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// A (domain, class) cell cannot supply the requested number of examples.
class SamplingError : public Error {
 public:
  using Error::Error;
};

/// Episode mode cannot be honoured by the dataset (e.g. cross-domain with one domain).
class ModeError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint file is corrupt or does not match the expected layout.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Training hit a non-finite loss. The message carries the diagnostics.
class TrainingAborted : public Error {
 public:
  using Error::Error;
};

}  // namespace xeml
