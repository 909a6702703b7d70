#pragma once

#include <stdexcept>
#include <string>

namespace epiwane {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A rejected parameter. `field()` is the dotted path of the offending
/// value (e.g. "profile.lambda_base"); callers nesting the value prefix it.
class InvalidParameter : public Error {
public:
    InvalidParameter(std::string field, const std::string& reason)
        : Error(field + ": " + reason)
        , field_(std::move(field))
        , reason_(reason)
    {
    }

    const std::string& field() const noexcept { return field_; }
    const std::string& reason() const noexcept { return reason_; }

    InvalidParameter prefixed(const std::string& prefix) const
    {
        return InvalidParameter(prefix.empty() ? field_ : prefix + "." + field_, reason_);
    }

private:
    std::string field_;
    std::string reason_;
};

/// Iterative solver failed to meet its tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what)
        , residual_(residual)
    {
    }
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

} // namespace epiwane
