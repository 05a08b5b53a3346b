#pragma once

#include <stdexcept>
#include <string>

namespace mfr {

// Bad inputs or configuration. The CLI maps this to exit code 2.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Numerical failure during a run (blow-up, singular regression, flow stall).
// The CLI maps this to exit code 3.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace mfr
