#pragma once

#include <stdexcept>
#include <string>

namespace fedent {

// Error taxonomy mirrored by the C API status codes: config/usage problems
// are reported separately from numeric non-convergence.
enum class ErrorKind {
    invalid_argument,
    config,
    io,
    numeric,
    not_converged,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace fedent
