#pragma once

#include "safeflow/kernels.hpp"
#include "safeflow/models.hpp"
#include "safeflow/types.hpp"

namespace safeflow {

/// M particles in R^n stored column-wise (n x M), plus the flow time.
struct ParticleEnsemble {
    Matrix states;
    double time = 0.0;

    ParticleEnsemble() = default;
    explicit ParticleEnsemble(Matrix s, double t = 0.0) : states(std::move(s)), time(t) {}

    Eigen::Index size() const { return states.cols(); }
    Eigen::Index dim() const { return states.rows(); }
    auto particle(Eigen::Index j) const { return states.col(j); }
};

/// One drift vector per particle, aligned with ensemble order (n x M).
struct DriftField {
    Matrix vectors;

    Eigen::Index size() const { return vectors.cols(); }
};

/// Monte Carlo Stein drift at every particle:
///   phi(x_i) = 1/M sum_j [ grad_xi k(xi, x_i) + k(xi, x_i) grad log p(xi, z) ]  at xi = x_j.
/// Each row is summed in ensemble order, so the result does not depend on
/// `workers`. Throws ModelError naming the first particle whose model
/// gradient is not finite.
DriftField stein_drift(const ParticleEnsemble& ensemble, const TargetModel& model, const RbfKernel& kernel,
                       int workers = 1);

/// Same as stein_drift with precomputed scores grad log p(x_j, z) (n x M).
DriftField stein_drift_from_scores(const ParticleEnsemble& ensemble, const Matrix& scores, const RbfKernel& kernel,
                                   int workers = 1);

/// Elementwise sum desired + controls.
DriftField compose(const DriftField& desired, const DriftField& controls);

}  // namespace safeflow
