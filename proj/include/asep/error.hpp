#pragma once

#include <stdexcept>
#include <string>

namespace asep {

/// Invalid input: bad parameters, malformed files, violated preconditions
/// that the caller can fix.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Time step exceeds the stability bound of an explicit scheme.
class CflError : public ConfigError {
public:
    CflError(const std::string& what, double max_dt) : ConfigError(what), max_dt_(max_dt) {}
    double max_dt() const noexcept { return max_dt_; }

private:
    double max_dt_;
};

} // namespace asep
