#pragma once

#include <stdexcept>
#include <string>

namespace tfdma {

// Bad argument values: non-finite, out of range, malformed vectors.
struct invalid_input : std::invalid_argument {
    explicit invalid_input(const std::string& what) : std::invalid_argument(what) {}
};

// A schedule query that needs more firing history than the schedule holds.
struct insufficient_history : std::runtime_error {
    explicit insufficient_history(const std::string& what) : std::runtime_error(what) {}
};

// Switch-target request that cannot name a distinct channel (C == 1).
struct no_target : std::runtime_error {
    explicit no_target(const std::string& what) : std::runtime_error(what) {}
};

// Measurement window does not lie in a converged region of the trace.
struct not_at_steady_state : std::runtime_error {
    explicit not_at_steady_state(const std::string& what) : std::runtime_error(what) {}
};

// Work refused because it would exceed a configured enumeration limit.
struct size_limit_exceeded : std::runtime_error {
    explicit size_limit_exceeded(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tfdma
