#pragma once

#include <stdexcept>
#include <string>

namespace ckmerge {

/// Raised when inputs violate a documented precondition or invariant
/// (bad metric values, malformed names, mismatched tensor shapes, ...).
/// The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& message) : std::runtime_error(message) {}
};

/// Raised when reading or writing files fails; messages carry the path
/// and, for structured files, the failing location. The CLI maps this
/// to exit code 3.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& message) : std::runtime_error(message) {}
};

}  // namespace ckmerge
