#pragma once

#include <stdexcept>
#include <string>

namespace fairfed {

// Error taxonomy. Configuration errors come from bad user input, format
// errors from malformed files, contract/shape/numeric errors from broken
// internal preconditions.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config: " + msg) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error("format: " + msg) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape: " + msg) {}
};

struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error("contract: " + msg) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error("numeric: " + msg) {}
};

} // namespace fairfed
