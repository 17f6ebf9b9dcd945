#pragma once

#include <stdexcept>
#include <string>

namespace paraformer {

// Error taxonomy. Contract/dimension/index errors indicate misuse of an API,
// config errors a bad model/run configuration, numeric errors a non-finite
// value produced where the data model requires finite floats, io errors a
// filesystem or file-format problem.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error("contract violation: " + msg) {}
};

class DimensionError : public ContractError {
public:
    explicit DimensionError(const std::string& msg) : ContractError("dimension mismatch: " + msg) {}
};

class IndexError : public ContractError {
public:
    explicit IndexError(const std::string& msg) : ContractError("index out of range: " + msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error("numeric failure: " + msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

}  // namespace paraformer
