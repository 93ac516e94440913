#ifndef LCGAN_ERRORS_HPP
#define LCGAN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace lcgan {

// Shape or dimensionality disagreement between tensors/arguments.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

// Invalid argument value (rates, thresholds, class indices, ...).
struct ValueError : std::runtime_error {
    explicit ValueError(const std::string& msg) : std::runtime_error("value error: " + msg) {}
};

// File / serialization problems. Message carries the offending path.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

// An op produced NaN/Inf. Training loops catch this and re-throw with
// epoch/batch context instead of letting non-finite values propagate.
struct NonFiniteError : std::runtime_error {
    explicit NonFiniteError(const std::string& msg) : std::runtime_error("non-finite value: " + msg) {}
};

}  // namespace lcgan

#endif
