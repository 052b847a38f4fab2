#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace ssldetect {

// Error raised when an operation's inputs violate its contract
// (shape mismatches, invalid configuration, malformed files, ...).
class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Error raised when a computation produced non-finite values or training
// had to abort.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Error raised on IO failures (unreadable datasets, truncated checkpoints, ...).
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void format_into(std::ostringstream&) {}

template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    format_into(os, rest...);
}
} // namespace detail

template <typename... Args>
std::string concat(const Args&... args) {
    std::ostringstream os;
    detail::format_into(os, args...);
    return os.str();
}

template <typename... Args>
void check(bool cond, const Args&... args) {
    if (!cond) throw ContractError(concat(args...));
}

} // namespace ssldetect
