#pragma once

#include <stdexcept>
#include <string>

namespace scarr {

// Exit codes used by the command-line driver.
//   ConfigError    -> 2
//   DataError      -> 3
//   NumericalError -> 4
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 1; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

class NumericalError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

} // namespace scarr
