#pragma once

#include <stdexcept>
#include <string>

namespace fraclab {

/// Argument outside the mathematical domain of an operation (r <= 0, t <= 0, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A graph or form could not be constructed (unknown family, budget, gluing).
class ConstructionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Linear algebra failed: singular system, non-convergence, size cap.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid run configuration or report file.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fraclab
