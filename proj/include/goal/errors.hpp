#pragma once

#include <stdexcept>
#include <string>

namespace goal {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An input violates a documented precondition (non-finite entries,
/// non-orthonormal basis, bad parameter range).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Iterative numerics failed to converge.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A class/domain partition is missing a required block.
class PartitionError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset, checkpoint, or config file.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Invalid generator or experiment specification.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Training stopped on a non-finite loss or an empty selection.
class TrainingAbort : public Error {
 public:
  using Error::Error;
};

}  // namespace goal
