#include "safeflow/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>

namespace safeflow {

std::string_view to_string(IntegratorKind k) { return k == IntegratorKind::euler ? "euler" : "rk4"; }

IntegratorKind integrator_from_string(std::string_view name) {
    if (name == "euler") return IntegratorKind::euler;
    if (name == "rk4") return IntegratorKind::rk4;
    throw std::invalid_argument("unknown integrator '" + std::string(name) + "' (expected euler or rk4)");
}

std::string_view to_string(InfeasibilityPolicy p) { return p == InfeasibilityPolicy::relax ? "relax" : "abort"; }

InfeasibilityPolicy infeasibility_policy_from_string(std::string_view name) {
    if (name == "relax") return InfeasibilityPolicy::relax;
    if (name == "abort") return InfeasibilityPolicy::abort;
    throw std::invalid_argument("unknown infeasibility policy '" + std::string(name) + "' (expected relax or abort)");
}

void SafeFlowConfig::validate() const {
    auto positive = [](double v, const char* key) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(key, "must be a positive finite number");
    };
    positive(alpha_g, "flow.alpha_g");
    positive(bandwidth, "flow.bandwidth");
    positive(dt, "flow.dt");
    positive(tol_qp, "tolerances.qp");
    if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw ConfigError("flow.horizon", "must be finite and >= 0");
    if (!(tol_violation >= 0.0)) throw ConfigError("tolerances.violation", "must be >= 0");
    if (horizon > 0.0 && dt > horizon)
        throw ConfigError("flow.dt, flow.horizon", "step size dt exceeds the horizon T");
    if (particles < 1) throw ConfigError("flow.particles", "must be at least 1");
    if (snapshot_every < 1) throw ConfigError("output.snapshot_every", "must be at least 1");
    if (trace_every < 1) throw ConfigError("output.trace_every", "must be at least 1");
    if (workers < 1) throw ConfigError("flow.workers", "must be at least 1");
    const std::size_t steps = step_count();
    if (steps > 0 && steps % static_cast<std::size_t>(snapshot_every) != 0) {
        std::ostringstream os;
        os << "must divide the step count " << steps;
        throw ConfigError("output.snapshot_every", os.str());
    }
}

std::size_t SafeFlowConfig::step_count() const {
    if (horizon <= 0.0) return 0;
    return static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
}

FlowRhs flow_rhs(const ParticleEnsemble& ensemble, const TargetModel& model, const RbfKernel& kernel,
                 const ConstraintSet& set, const SafetyOptions& options) {
    const DriftField desired = stein_drift(ensemble, model, kernel, options.workers);
    SafeControls controls = safe_controls(ensemble, desired, set, options);
    FlowRhs out{compose(desired, controls.controls), controls.stats};
    const StateSpace& space = model.space();
    for (Eigen::Index j = 0; j < ensemble.size(); ++j)
        out.field.vectors.col(j) = space.tangentialize(ensemble.particle(j), out.field.vectors.col(j));
    return out;
}

void record_trace_point(BarrierTrace& trace, const ParticleEnsemble& ens, const ConstraintSet& set, double tol,
                  const SafetyStats& stats) {
    trace.times.push_back(ens.time);
    trace.h.push_back(barrier_estimate(ens, set));
    trace.violation_fraction.push_back(violation_fraction(ens, set, tol));
    trace.nonzero_control_fraction.push_back(
        stats.particles ? static_cast<double>(stats.nonzero_controls) / static_cast<double>(stats.particles) : 0.0);
}

namespace {

struct Stepper {
    const SafeFlowConfig& config;
    const TargetModel& model;
    const ConstraintSet& set;
    RbfKernel kernel;
    SafetyOptions options;
    FlowTotals& totals;

    FlowRhs eval(const Matrix& states, double t, std::size_t step) {
        try {
            FlowRhs r = flow_rhs(ParticleEnsemble(states, t), model, kernel, set, options);
            ++totals.rhs_evaluations;
            totals.relaxed_events += r.stats.relaxed_events;
            totals.max_slack = std::max(totals.max_slack, r.stats.max_slack);
            totals.min_cbf_margin = std::min(totals.min_cbf_margin, r.stats.min_cbf_margin);
            totals.max_nonzero_controls = std::max(totals.max_nonzero_controls, r.stats.nonzero_controls);
            return r;
        } catch (const QpInfeasibleError& e) {
            throw NumericalAbort(e.what(), step, e.particle());
        } catch (const ModelError& e) {
            throw NumericalAbort(std::string("model evaluation failed: ") + e.what(), step, -1);
        } catch (const ConstraintError& e) {
            throw NumericalAbort(std::string("constraint evaluation failed: ") + e.what(), step, -1);
        }
    }
};

void check_state(Matrix& states, const StateSpace& space, std::size_t step) {
    const double tol = space.boundary_tolerance();
    for (Eigen::Index j = 0; j < states.cols(); ++j) {
        auto x = states.col(j);
        if (!x.allFinite())
            throw NumericalAbort("non-finite state at step " + std::to_string(step) + ", particle " +
                                     std::to_string(j),
                                 step, j);
        if (!space.contains(x, tol))
            throw NumericalAbort("particle " + std::to_string(j) + " left the state space at step " +
                                     std::to_string(step),
                                 step, j);
        // Within tolerance of a face: snap back onto the box.
        x = x.cwiseMax(space.lower()).cwiseMin(space.upper());
    }
}

}  // namespace

FlowRun run(const SafeFlowConfig& config, const TargetModel& model, const ConstraintSet& set,
            const ParticleEnsemble& initial) {
    config.validate();
    if (initial.size() < 1) throw std::invalid_argument("run: initial ensemble is empty");
    if (initial.dim() != model.dim()) throw std::invalid_argument("run: ensemble and model dimensions differ");
    for (Eigen::Index j = 0; j < initial.size(); ++j) {
        if (!model.space().contains(initial.particle(j)))
            throw std::invalid_argument("run: initial particle " + std::to_string(j) + " is outside the state space");
    }

    FlowRun out;
    out.config = config;
    out.trace.labels = set.labels();
    Stepper stepper{config, model, set, config.kernel(), config.safety(), out.totals};

    const std::size_t steps = config.step_count();
    out.totals.steps = steps;
    Matrix x = initial.states;
    double t = 0.0;
    out.snapshots.emplace_back(x, t);

    for (std::size_t step = 0; step < steps; ++step) {
        const double h = step + 1 == steps ? config.horizon - t : config.dt;
        const FlowRhs k1 = stepper.eval(x, t, step);
        if (step % static_cast<std::size_t>(config.trace_every) == 0)
            record_trace_point(out.trace, ParticleEnsemble(x, t), set, config.tol_violation, k1.stats);

        Matrix next;
        if (config.integrator == IntegratorKind::euler) {
            next = x + h * k1.field.vectors;
        } else {
            const FlowRhs k2 = stepper.eval(x + 0.5 * h * k1.field.vectors, t + 0.5 * h, step);
            const FlowRhs k3 = stepper.eval(x + 0.5 * h * k2.field.vectors, t + 0.5 * h, step);
            const FlowRhs k4 = stepper.eval(x + h * k3.field.vectors, t + h, step);
            next = x + (h / 6.0) * (k1.field.vectors + 2.0 * k2.field.vectors + 2.0 * k3.field.vectors +
                                    k4.field.vectors);
        }
        check_state(next, model.space(), step + 1);
        x = std::move(next);
        t = step + 1 == steps ? config.horizon : static_cast<double>(step + 1) * config.dt;
        if ((step + 1) % static_cast<std::size_t>(config.snapshot_every) == 0 || step + 1 == steps)
            out.snapshots.emplace_back(x, t);
    }

    // Final trace point, with control statistics from one more field evaluation.
    const FlowRhs last = stepper.eval(x, t, steps);
    record_trace_point(out.trace, ParticleEnsemble(x, t), set, config.tol_violation, last.stats);
    out.final = ParticleEnsemble(x, t);
    return out;
}

ParticleEnsemble sample_prior(const GaussianPrior& prior, Eigen::Index count, std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("sample_prior: count must be at least 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix states(prior.dim(), count);
    Vector z(prior.dim());
    std::size_t attempts = 0;
    std::size_t rejected = 0;
    Eigen::Index accepted = 0;
    while (accepted < count) {
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
        Vector x = prior.mean() + prior.cholesky() * z;
        ++attempts;
        if (prior.truncation().contains(x)) {
            states.col(accepted++) = x;
        } else {
            ++rejected;
        }
        if (attempts >= 1000 && static_cast<double>(rejected) > 0.99 * static_cast<double>(attempts))
            throw std::runtime_error("sample_prior: more than 99% of draws fall outside the truncation box");
    }
    return ParticleEnsemble(std::move(states), 0.0);
}

}  // namespace safeflow
