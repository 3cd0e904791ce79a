#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

// Invalid experiment / dataset / attack parameters.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Caller violated an operation's precondition (empty data, bad round, ...).
class PreconditionError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Client updates that cannot be combined (shape mismatch).
class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when a round is requested but every client has been blacklisted.
class FederationHalted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fedsim
