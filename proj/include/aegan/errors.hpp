#pragma once
#include <stdexcept>
#include <string>

namespace aegan {

// CLI exit-code mapping: UsageError -> 2, DataError -> 3, NumericalAbort -> 4.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace aegan
