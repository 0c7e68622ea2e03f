#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace stfno {

/// Precondition or shape violation in a caller-supplied argument.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed, truncated, or version-mismatched file.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A NaN/Inf appeared during evaluation. `where` names the stage (layer,
/// rollout step, epoch/batch) so callers can report it without parsing text.
class NumericFailure : public std::runtime_error {
public:
    NumericFailure(const std::string& what, std::string where, std::optional<std::size_t> index = {})
        : std::runtime_error(what), where_(std::move(where)), index_(index) {}

    const std::string& where() const noexcept { return where_; }
    std::optional<std::size_t> index() const noexcept { return index_; }

private:
    std::string where_;
    std::optional<std::size_t> index_;
};

/// Gradient checker could not evaluate the operation (non-finite forward output).
class CheckFailed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidArgument(msg);
}

}  // namespace stfno
