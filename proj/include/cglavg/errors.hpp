#pragma once

#include <stdexcept>
#include <string>

namespace cglavg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument or precondition violation at an API boundary.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A structural hypothesis (γ-floor, spectral gap, Lipschitz claim) fails.
class ConditionError : public Error {
public:
    using Error::Error;
};

/// The state left the admissible region (non-finite values or norm above the guard).
class BlowUpError : public Error {
public:
    BlowUpError(const std::string& what, double time) : Error(what), time_(time) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

/// An iterative procedure exhausted its schedule before reaching tolerance.
class NotConvergedError : public Error {
public:
    using Error::Error;
};

/// Input exceeds the exact-solver size limit.
class SizeLimitError : public Error {
public:
    using Error::Error;
};

/// Configuration file errors (parse or validation).
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace cglavg
