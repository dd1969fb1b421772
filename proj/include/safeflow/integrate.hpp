#pragma once

#include "safeflow/constraints.hpp"
#include "safeflow/diagnostics.hpp"
#include "safeflow/drift.hpp"
#include "safeflow/kernels.hpp"
#include "safeflow/models.hpp"
#include "safeflow/safety.hpp"

#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

namespace safeflow {

enum class IntegratorKind { euler, rk4 };

std::string_view to_string(IntegratorKind k);
IntegratorKind integrator_from_string(std::string_view name);
std::string_view to_string(InfeasibilityPolicy p);
InfeasibilityPolicy infeasibility_policy_from_string(std::string_view name);

struct SafeFlowConfig {
    double alpha_g = 1.0;
    double bandwidth = 3.0;
    BandwidthConvention kernel_convention = BandwidthConvention::half_inverse_square;
    double dt = 0.02;
    double horizon = 40.0;
    int particles = 1000;
    std::uint64_t seed = 1;
    IntegratorKind integrator = IntegratorKind::rk4;
    int snapshot_every = 100;
    int trace_every = 1;
    int workers = 1;
    double tol_qp = kDefaultQpTolerance;
    /// g_i < -tol_violation counts as a violation in the trace statistics.
    double tol_violation = 1e-3;
    InfeasibilityPolicy infeasibility = InfeasibilityPolicy::relax;

    /// Throws ConfigError naming the offending key(s).
    void validate() const;

    /// ceil(horizon / dt); zero when horizon == 0.
    std::size_t step_count() const;

    RbfKernel kernel() const { return RbfKernel(bandwidth, kernel_convention); }
    SafetyOptions safety() const { return {alpha_g, tol_qp, infeasibility, workers}; }
};

struct FlowTotals {
    std::size_t steps = 0;
    std::size_t rhs_evaluations = 0;
    std::size_t relaxed_events = 0;
    double max_slack = 0.0;
    double min_cbf_margin = std::numeric_limits<double>::infinity();
    std::size_t max_nonzero_controls = 0;
};

struct FlowRun {
    SafeFlowConfig config;
    /// Strictly increasing times, first at t = 0, last at t = horizon.
    std::vector<ParticleEnsemble> snapshots;
    ParticleEnsemble final;
    BarrierTrace trace;
    FlowTotals totals;
};

struct FlowRhs {
    DriftField field;
    SafetyStats stats;
};

/// Stein drift, CBF controls, composition, then boundary tangency at each particle.
FlowRhs flow_rhs(const ParticleEnsemble& ensemble, const TargetModel& model, const RbfKernel& kernel,
                 const ConstraintSet& set, const SafetyOptions& options);

/// Appends one barrier/violation/control-fraction sample at ens.time.
void record_trace_point(BarrierTrace& trace, const ParticleEnsemble& ens, const ConstraintSet& set,
                        double tol_violation, const SafetyStats& stats);

/// Fixed-step integration of the safe particle flow from `initial` to config.horizon.
/// Throws NumericalAbort on non-finite states, model or constraint failures,
/// infeasible QPs under the abort policy, or containment loss.
FlowRun run(const SafeFlowConfig& config, const TargetModel& model, const ConstraintSet& set,
            const ParticleEnsemble& initial);

/// Gaussian draws rejected outside the prior's truncation box. Throws
/// std::runtime_error when more than 99% of draws are rejected.
ParticleEnsemble sample_prior(const GaussianPrior& prior, Eigen::Index count, std::uint64_t seed);

}  // namespace safeflow
