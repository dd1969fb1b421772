#pragma once

#include "safeflow/constraints.hpp"
#include "safeflow/drift.hpp"
#include "safeflow/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace safeflow {

/// Monte Carlo barrier values over time, one entry per recorded time.
struct BarrierTrace {
    std::vector<std::string> labels;
    std::vector<double> times;
    std::vector<Vector> h;
    std::vector<double> violation_fraction;
    std::vector<double> nonzero_control_fraction;

    std::size_t size() const { return times.size(); }
    bool empty() const { return times.empty(); }
};

/// h_i = -(1/M) sum_j g_i(x_j) [g_i(x_j) < 0]; nonnegative by construction.
Vector barrier_estimate(const ParticleEnsemble& ensemble, const ConstraintSet& set);

/// Fraction of particles with some g_i(x) < -tolerance.
double violation_fraction(const ParticleEnsemble& ensemble, const ConstraintSet& set, double tolerance);

struct DecayViolation {
    std::size_t constraint = 0;
    std::size_t interval = 0;  ///< index k of the interval [t_k, t_{k+1}]
    double t_start = 0.0;
    double t_end = 0.0;
    double h_start = 0.0;
    double h_end = 0.0;
    double bound = 0.0;  ///< h_start * exp(-alpha dt) + slack
    double excess() const { return h_end - bound; }
};

struct DecayReport {
    bool pass = true;
    double alpha = 0.0;
    Vector slack;
    std::size_t intervals_checked = 0;
    std::vector<DecayViolation> violations;
    std::optional<DecayViolation> worst;

    std::string summary(const std::vector<std::string>& labels = {}) const;
};

/// Flags every interval where h_i(t_{k+1}) > h_i(t_k) exp(-alpha (t_{k+1} - t_k)) + slack_i.
DecayReport decay_check(const BarrierTrace& trace, double alpha, const Vector& slack);
DecayReport decay_check(const BarrierTrace& trace, double alpha, double slack);

/// Slack 0.05 h_i(t_0) + 1e-4 per constraint.
Vector default_decay_slack(const BarrierTrace& trace);

/// k-nearest-neighbour estimate of KL(samples || reference) (Wang, Kulkarni
/// and Verdu). Columns are points. `intrinsic_dim` defaults to the ambient
/// dimension; pass a smaller value for samples confined to a manifold.
/// Throws std::invalid_argument with fewer than k + 1 points on either side.
double divergence_proxy(const Matrix& samples, const Matrix& reference, int k = 5, int intrinsic_dim = -1);

/// Draws `count` samples of N(mean, covariance) as columns.
Matrix sample_gaussian(const Vector& mean, const Matrix& covariance, Eigen::Index count, std::uint64_t seed);

}  // namespace safeflow
