#pragma once

#include <stdexcept>
#include <string>

namespace hedgedisc {

/// Invalid configuration or input. The CLI maps it to exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not continue (lost definiteness, overflow,
/// non-positive barrier). The CLI maps it to exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

}  // namespace detail
}  // namespace hedgedisc
