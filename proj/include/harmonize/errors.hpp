#pragma once

#include <stdexcept>
#include <string>

namespace harmonize {

/// Raised when inputs violate a documented precondition (bad file, bad
/// schema, degenerate data). The CLI maps these to exit code 1; anything
/// else that escapes is an internal error (exit code 2).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace harmonize
