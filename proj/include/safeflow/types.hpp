#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace safeflow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

/// Raised when a target model produces a non-finite log-density gradient.
class ModelError : public std::runtime_error {
public:
    ModelError(const std::string& what, Vector point)
        : std::runtime_error(what), point_(std::move(point)) {}

    const Vector& point() const noexcept { return point_; }

private:
    Vector point_;
};

/// Raised when a constraint is evaluated inside its declared singular set.
class ConstraintError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised by config parsing and validation; `key_path` names the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key_path, const std::string& message)
        : std::runtime_error(key_path.empty() ? message : key_path + ": " + message),
          key_path_(std::move(key_path)) {}

    const std::string& key_path() const noexcept { return key_path_; }

private:
    std::string key_path_;
};

/// Raised when the integrator hits a non-finite state or leaves the state space.
class NumericalAbort : public std::runtime_error {
public:
    NumericalAbort(const std::string& what, std::size_t step, std::ptrdiff_t particle)
        : std::runtime_error(what), step_(step), particle_(particle) {}

    std::size_t step() const noexcept { return step_; }
    /// -1 when the failure is not tied to a single particle.
    std::ptrdiff_t particle() const noexcept { return particle_; }

private:
    std::size_t step_;
    std::ptrdiff_t particle_;
};

}  // namespace safeflow
