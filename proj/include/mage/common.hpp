#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mage {

/// Token ids live in [0, V). The mask token is V.
using Token = std::int32_t;
using TokenSequence = std::vector<Token>;

/// Binary per-position flags (mask bits, labels, commitment).
using BitVector = std::vector<std::uint8_t>;

/// Caller violated an operation precondition.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Out-of-range generator or model parameter.
class ParameterError : public UsageError {
public:
    using UsageError::UsageError;
};

/// Non-finite loss or parameter during training.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid experiment configuration; carries the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& message)
        : std::runtime_error("config error at '" + field + "': " + message),
          field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

} // namespace mage
