#pragma once

#include <stdexcept>
#include <string>

namespace d2s {

// Invalid configuration or hyperparameter (bad layer sizes, tau out of range, ...).
struct ConfigError : std::invalid_argument {
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Dimension mismatch between vectors, matrices or parameter collections.
struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// Argument outside the mathematical domain of a function (e.g. a negative distance).
struct DomainError : std::domain_error {
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// Replay buffer holds fewer transitions than requested.
struct NotReadyError : std::runtime_error {
    explicit NotReadyError(const std::string& what) : std::runtime_error(what) {}
};

// Call sequence violation, e.g. stepping an episode that already ended.
struct ProtocolError : std::logic_error {
    explicit ProtocolError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace d2s
