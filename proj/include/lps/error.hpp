#pragma once

#include <stdexcept>
#include <string>

namespace lps {

/// Inconsistent shapes, invalid parameters or configuration.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Problems with an on-disk array, dataset bundle or text file.
class FormatError : public std::runtime_error {
public:
    enum class Kind { Io, BadMagic, UnsupportedVersion, DimensionOverflow, Truncated, Syntax };

    FormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Non-finite iterate, SVD failure, training divergence.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace lps
