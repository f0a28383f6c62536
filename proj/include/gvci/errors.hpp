#pragma once

#include <stdexcept>
#include <string>

namespace gvci {

// Malformed or inconsistent input data.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration value or unknown key.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite loss or parameters during optimisation.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace gvci
