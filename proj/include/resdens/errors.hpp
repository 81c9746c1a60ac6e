#pragma once

#include <stdexcept>
#include <string>

namespace resdens {

// Shape/axis mismatch in a tensor operation. Messages name the offending axes.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Bad class label (outside 0..K-1).
class LabelError : public std::invalid_argument {
public:
    explicit LabelError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Invalid configuration value or inconsistent config file.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file (PGM, CSV, checkpoint). Carries a byte offset when known.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg, long long offset = -1)
        : std::runtime_error(offset >= 0 ? msg + " (byte offset " + std::to_string(offset) + ")" : msg),
          byte_offset(offset) {}
    long long byte_offset;
};

// NaN/Inf encountered where the contract requires finite values.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse (wrong mode, double expansion, stale cache).
class UsageError : public std::logic_error {
public:
    explicit UsageError(const std::string& msg) : std::logic_error(msg) {}
};

} // namespace resdens
