#pragma once

#include <stdexcept>
#include <string>

namespace freqsp {

// Base for everything the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Violated precondition: wrong colorspace, bad kernel size, shape mismatch.
class ContractError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// External tool failed, timed out or produced output we could not parse.
class AdapterError : public Error {
public:
    AdapterError(const std::string& what, std::string output = {})
        : Error(what), output_(std::move(output)) {}

    const std::string& output() const noexcept { return output_; }

private:
    std::string output_;
};

// External tool is not installed; callers may fall back to a native metric.
class AdapterUnavailable : public AdapterError {
public:
    using AdapterError::AdapterError;
};

class FitError : public Error {
public:
    using Error::Error;
};

class NoOverlapError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractError(msg);
}

} // namespace detail
} // namespace freqsp
