#pragma once

#include <stdexcept>
#include <string>

namespace vpf {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed token or record in a text input.
struct ParseError : Error {
  using Error::Error;
};

/// A required record or tensor is absent.
struct MissingField : Error {
  using Error::Error;
};

/// Input parsed but violates a documented invariant.
struct ValidationError : Error {
  using Error::Error;
};

/// Binary input ends in the middle of a record.
struct TruncatedInput : Error {
  using Error::Error;
};

/// Wrong magic bytes or unsupported container variant.
struct FormatError : Error {
  using Error::Error;
};

/// Tensor or vector dimensions do not line up.
struct ShapeError : Error {
  using Error::Error;
};

/// A named tensor is missing from a weight bundle.
struct MissingWeight : Error {
  using Error::Error;
};

/// Numeric argument outside the function's domain.
struct DomainError : Error {
  using Error::Error;
};

/// Point projects to non-positive camera depth.
struct BehindCamera : Error {
  using Error::Error;
};

}  // namespace vpf
