#pragma once

#include <stdexcept>
#include <string>

namespace vqmpt {

// Thrown when operand shapes are incompatible; the message names both shapes.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown for degenerate numeric inputs (zero-norm vectors, nonpositive
// variances, invalid domains).
struct NumericDomainError : std::runtime_error {
    explicit NumericDomainError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace vqmpt
