#pragma once

#include <stdexcept>
#include <string>

namespace ffc {

// Bad argument to a numerical routine (non-finite input, size mismatch, ...).
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A group-conditional metric was asked for over an empty group.
struct DegenerateGroup : std::domain_error {
  using std::domain_error::domain_error;
};

// A loss or statistic evaluated to NaN/inf.
struct NumericFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent data (CSV, datasets, manifests).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PartitionInfeasible : DataError {
  using DataError::DataError;
};

// Malformed experiment configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Effect cannot be identified from the given graph/table.
struct IdentificationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ffc
