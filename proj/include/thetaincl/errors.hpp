#pragma once

#include <stdexcept>
#include <string>

namespace thetaincl {

// Error taxonomy mirrored by the CLI exit codes: ConfigError -> 2,
// SolverError (and subclasses) -> 3, ValidationError -> 4.  Precondition
// violations on library operations throw std::invalid_argument.

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class SolverError : public std::runtime_error {
public:
    explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

// A slab length exceeded the admissibility threshold while strict mode was on.
class InadmissibleStep : public SolverError {
public:
    InadmissibleStep(int slab, double tau, double tau0, const std::string& what)
        : SolverError(what), slab(slab), tau(tau), tau0(tau0) {}
    int slab;
    double tau;
    double tau0;
};

// Newton and the Picard fallback both failed to reach the residual tolerance.
class NonConvergence : public SolverError {
public:
    NonConvergence(int slab, double residual, const std::string& what)
        : SolverError(what), slab(slab), residual(residual) {}
    int slab;
    double residual;
};

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace thetaincl
