#pragma once

#include <stdexcept>
#include <string>

namespace llab {

// Error taxonomy shared by the library and the CLI exit-code mapping.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad shapes, bad options, malformed config files. CLI exit code 2.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Non-finite values produced during evaluation or training. CLI exit code 3.
struct NumericError : Error {
    NumericError(const std::string& msg, int op_id = -1) : Error(msg), op_id(op_id) {}
    int op_id;  // tape node that produced the non-finite value, -1 if unknown
};

// Misuse of an object's lifecycle (e.g. consuming a tape twice).
struct StateError : Error {
    explicit StateError(const std::string& msg) : Error(msg) {}
};

// Argument outside its documented domain.
struct RangeError : Error {
    explicit RangeError(const std::string& msg) : Error(msg) {}
};

// Filesystem failures. CLI exit code 4.
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace llab
