#pragma once

#include "safeflow/types.hpp"

#include <functional>
#include <optional>
#include <string>
#include <variant>

namespace safeflow {

/// Axis-aligned box lower <= x <= upper.
class StateSpace {
public:
    StateSpace(Vector lower, Vector upper);

    /// The box ||x||_inf <= half_width in `dim` dimensions.
    static StateSpace cube(int dim, double half_width);

    int dim() const { return static_cast<int>(lower_.size()); }
    const Vector& lower() const { return lower_; }
    const Vector& upper() const { return upper_; }

    /// Componentwise containment, optionally widened by `slack` on every face.
    bool contains(const VectorRef& x, double slack = 0.0) const;

    /// 1e-9 times the narrowest box width.
    double boundary_tolerance() const;

    /// Zeroes outward velocity components on faces the point lies on (within
    /// boundary_tolerance()), so the returned drift never points out of the box.
    Vector tangentialize(const VectorRef& x, const VectorRef& v) const;

private:
    Vector lower_;
    Vector upper_;
};

/// Gaussian prior truncated to a state space. Only the unnormalized
/// log-density and its gradient are exposed.
class GaussianPrior {
public:
    GaussianPrior(Vector mean, Matrix covariance, StateSpace truncation);

    const Vector& mean() const { return mean_; }
    const Matrix& covariance() const { return covariance_; }
    const Matrix& precision() const { return precision_; }
    /// Lower Cholesky factor of the covariance.
    const Matrix& cholesky() const { return chol_; }
    const StateSpace& truncation() const { return truncation_; }
    int dim() const { return static_cast<int>(mean_.size()); }

    double log_density(const VectorRef& x) const;
    Vector grad_log_density(const VectorRef& x) const;

private:
    Vector mean_;
    Matrix covariance_;
    Matrix precision_;
    Matrix chol_;
    StateSpace truncation_;
};

/// Scalar range observation z = ||x|| + v, v ~ N(0, noise_variance).
struct RangeLikelihood {
    /// Below this radius the gradient is treated as zero.
    static constexpr double kRadiusGuard = 1e-8;

    double noise_variance = 1.0;
    double observation = 0.0;

    double log_density(const VectorRef& x) const;
    Vector grad_log_density(const VectorRef& x) const;
};

/// Linear-Gaussian observation z = H x + v, v ~ N(0, R).
class LinearGaussianLikelihood {
public:
    LinearGaussianLikelihood(Matrix observation_matrix, Matrix noise_covariance, Vector observation);

    const Matrix& observation_matrix() const { return h_; }
    const Matrix& noise_covariance() const { return r_; }
    const Vector& observation() const { return z_; }

    double log_density(const VectorRef& x) const;
    Vector grad_log_density(const VectorRef& x) const;

private:
    Matrix h_;
    Matrix r_;
    Matrix r_inv_;
    Vector z_;
};

using Likelihood = std::variant<RangeLikelihood, LinearGaussianLikelihood>;

/// Unnormalized log p(x, z) for a fixed observation together with its
/// gradient, restricted to a state space.
class TargetModel {
public:
    using LogFn = std::function<double(const VectorRef&)>;
    using GradFn = std::function<Vector(const VectorRef&)>;

    TargetModel(StateSpace space, LogFn log_joint, GradFn grad, Vector observation,
                std::string descriptor);

    const StateSpace& space() const { return space_; }
    int dim() const { return space_.dim(); }
    const Vector& observation() const { return observation_; }
    const std::string& descriptor() const { return descriptor_; }

    double log_joint(const VectorRef& x) const;

    /// grad_x log p(x, z); throws ModelError if the result is not finite.
    Vector log_joint_grad(const VectorRef& x) const;

private:
    StateSpace space_;
    LogFn log_joint_;
    GradFn grad_;
    Vector observation_;
    std::string descriptor_;
};

/// Prior-only or prior-times-likelihood target on the prior's truncation box.
TargetModel make_target(const GaussianPrior& prior, const std::optional<Likelihood>& likelihood = std::nullopt);

/// Closed-form posterior of a Gaussian prior under a linear-Gaussian likelihood.
struct GaussianPosterior {
    Vector mean;
    Matrix covariance;
};
GaussianPosterior conjugate_posterior(const GaussianPrior& prior, const LinearGaussianLikelihood& likelihood);

}  // namespace safeflow
