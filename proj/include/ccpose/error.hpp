#pragma once

#include <stdexcept>
#include <string>

namespace ccpose {

// Shape or dimension disagreement between tensors. Messages carry both shapes.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid scalar argument (non-positive tau, bad bin count, ...).
struct ParamError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Target coordinate outside the encodable axis range.
struct EncodeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Caller broke an API contract (stale cache, unnormalized label, ...).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// NaN/Inf surfaced from a kernel operation.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File format / persistence failures.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ccpose
