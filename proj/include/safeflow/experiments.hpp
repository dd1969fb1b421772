#pragma once

#include "safeflow/constraints.hpp"
#include "safeflow/integrate.hpp"
#include "safeflow/models.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace safeflow {

/// A fully parameterized experiment: model, raw (unexpanded) constraints and
/// flow settings.
struct Scenario {
    std::string name;
    std::string description;
    GaussianPrior prior;
    std::optional<Likelihood> likelihood;
    /// Ground-truth state used to generate the observation, when there is one.
    std::optional<Vector> truth;
    std::vector<Constraint> constraints;
    SafeFlowConfig config;
    bool unconstrained_baseline = false;
    bool projection_baseline = false;

    TargetModel target() const { return make_target(prior, likelihood); }
    ConstraintSet constraint_set() const { return expand(constraints); }
};

/// Cone + circle constraints on the range-observation problem.
Scenario scenario_paper_full();
/// The same problem with only the cone constraint.
Scenario scenario_inequality_only();
/// 2-D linear-Gaussian model with a closed-form posterior and no constraints.
Scenario scenario_conjugate_sanity();

std::vector<std::string> scenario_names();
/// Throws std::invalid_argument for unknown names.
Scenario scenario_by_name(const std::string& name);

/// Range observation z = ||truth||, optionally perturbed by N(0, R) noise drawn with `noise_seed`.
double range_observation(const Vector& truth, double noise_variance, std::optional<std::uint64_t> noise_seed);

/// Checks that the safe set is nonempty by scanning `samples` candidate
/// points: points on the equality manifolds (by projection) when the
/// scenario has equality generators, a grid around the prior otherwise.
struct FeasibilityScan {
    std::size_t scanned = 0;
    std::size_t feasible = 0;
    bool nonempty() const { return feasible > 0; }
};
FeasibilityScan feasibility_scan(const Scenario& scenario, std::size_t samples = 10000);

/// Unconstrained Stein step of size dt (with the configured integrator)
/// followed by projection onto every equality generator that has a
/// projector. Inequality constraints are ignored. Particles where the
/// projection is undefined are left in place and counted.
struct ProjectionStep {
    ParticleEnsemble ensemble;
    std::size_t unprojected = 0;
};
ProjectionStep projection_baseline_step(const ParticleEnsemble& ensemble, const TargetModel& model,
                                        const RbfKernel& kernel, const std::vector<Constraint>& raw_constraints,
                                        double dt, IntegratorKind integrator = IntegratorKind::rk4, int workers = 1);

/// Runs the simplified projection baseline over the configured horizon,
/// recording snapshots and a barrier trace over the expanded constraints.
FlowRun run_projection_baseline(const SafeFlowConfig& config, const TargetModel& model,
                                const std::vector<Constraint>& raw_constraints, const ParticleEnsemble& initial,
                                std::size_t* unprojected_total = nullptr);

/// Samples from the (constrained) posterior of a 2-D scenario by inverse-CDF
/// sampling on a fine grid: along the circle for a sphere equality, over a
/// Cartesian window around the prior otherwise. Inequality constraints mask
/// the grid. Used as the reference for divergence_proxy.
Matrix reference_posterior_samples(const Scenario& scenario, Eigen::Index count, std::uint64_t seed);

/// Intrinsic dimension of the scenario's safe set (ambient minus equality generators).
int intrinsic_dimension(const Scenario& scenario);

}  // namespace safeflow
