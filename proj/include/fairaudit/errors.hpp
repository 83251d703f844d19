#pragma once

#include <stdexcept>
#include <string>

namespace fairaudit {

// Invalid run configuration or malformed caller input. CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training/inference failure (divergence, sampler tuning). CLI exit code 3.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unusable data (bad CSV, degenerate covariance, empty split). CLI exit code 4.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Programming-contract violations: dimension mismatches, shape-table
// inconsistencies, guard violations.
struct StructuralError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace fairaudit
