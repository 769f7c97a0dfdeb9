#pragma once

#include <stdexcept>
#include <string>

namespace amc {

// Error categories. The CLI maps each category onto a distinct exit code.
enum class ErrorKind {
    InvalidArgument,
    ShapeMismatch,
    Io,
    BadMagic,
    VersionMismatch,
    Truncated,
    NonFinite,
    Config,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

const char* to_string(ErrorKind kind) noexcept;

}  // namespace amc
