#pragma once

#include <stdexcept>
#include <string>

namespace gazevit {

// Rejected arguments: shape mismatches, missing gaze, inconsistent plans.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Non-finite loss or intermediate state during training or sampling.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// No buffered chunk covers the requested control step.
class PolicyStall : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace gazevit
