#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace defsim {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (lengths, spacing, non-finite samples).
class InputError : public Error {
public:
    using Error::Error;
};

/// Network topology problems: bad endpoints, zero impedance, islands without a slack.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// Iterative solver did not reach its tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual, int iterations)
        : Error(what), residual_(residual), iterations_(iterations) {}

    double residual() const noexcept { return residual_; }
    int iterations() const noexcept { return iterations_; }

private:
    double residual_;
    int iterations_;
};

/// Time integration or per-step algebraic solve failed at a given instant.
class IntegrationFault : public Error {
public:
    IntegrationFault(const std::string& what, double time)
        : Error(what + " (t = " + std::to_string(time) + " s)"), time_(time) {}

    double time() const noexcept { return time_; }

private:
    double time_;
};

/// Initial state is not an equilibrium.
class InitializationFault : public Error {
public:
    using Error::Error;
};

/// Energy decomposition does not add up to the terminal measurement.
class ConsistencyFault : public Error {
public:
    using Error::Error;
};

/// Slope or frequency analysis cannot be carried out on the given data.
class AnalysisError : public Error {
public:
    using Error::Error;
};

/// Unknown bus, branch, device, or preset name.
class LookupError : public Error {
public:
    using Error::Error;
};

/// Argument outside the domain of a function.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Scenario configuration problems. Carries every violation found, not only the first.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> violations)
        : Error(join(violations)), violations_(std::move(violations)) {}

    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out = "invalid scenario configuration:";
        for (const auto& s : v) {
            out += "\n  - ";
            out += s;
        }
        return out;
    }

    std::vector<std::string> violations_;
};

}  // namespace defsim
