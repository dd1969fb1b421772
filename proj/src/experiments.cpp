#include "safeflow/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

namespace safeflow {

namespace {

const Vector& range_truth() {
    static const Vector truth = (Vector(2) << 14.7, -10.1).finished();
    return truth;
}

GaussianPrior range_prior() {
    Matrix cov(2, 2);
    cov << 15.0, -5.0, -5.0, 15.0;
    return GaussianPrior(Vector::Zero(2), cov, StateSpace::cube(2, 1e3));
}

Vector fov_axis() {
    const double h = std::sqrt(2.0) / 2.0;
    return (Vector(2) << h, -h).finished();
}

Constraint fov_cone() { return cone_constraint(fov_axis(), std::numbers::pi / 5.0); }

Constraint range_circle() { return sphere_equality(15.8); }

SafeFlowConfig base_flow_config() {
    SafeFlowConfig c;
    c.alpha_g = 1.0;
    c.bandwidth = 3.0;
    c.dt = 0.02;
    c.horizon = 40.0;
    c.particles = 1000;
    c.seed = 7;
    c.integrator = IntegratorKind::rk4;
    c.snapshot_every = 100;
    return c;
}

// Projects x onto {g = 0} with the constraint's own projector, or by
// Gauss-Newton steps along the gradient when it has none.
Vector project_onto(const Constraint& c, const VectorRef& x) {
    if (c.project) return c.project(x);
    Vector y = x;
    for (int iter = 0; iter < 50; ++iter) {
        const double g = c.value(y);
        if (std::abs(g) <= 1e-12 * (1.0 + y.squaredNorm())) break;
        const Vector grad = c.gradient(y);
        const double norm2 = grad.squaredNorm();
        if (norm2 < 1e-24) throw ConstraintError("projection stalled at a vanishing gradient");
        y -= (g / norm2) * grad;
    }
    return y;
}

Vector project_all(const std::vector<Constraint>& raw, const VectorRef& x) {
    Vector y = x;
    for (const Constraint& c : raw) {
        if (c.kind == ConstraintKind::equality_generator) y = project_onto(c, y);
    }
    return y;
}

bool satisfies_inequalities(const std::vector<Constraint>& raw, const VectorRef& x) {
    for (const Constraint& c : raw) {
        if (c.kind == ConstraintKind::inequality && !(c.value(x) >= 0.0)) return false;
    }
    return true;
}

// Half-width of the square window used for 2-D grids.
double window_half_width(const Scenario& s) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s.prior.covariance());
    double half = 6.0 * std::sqrt(eig.eigenvalues().maxCoeff());
    if (s.truth) half = std::max(half, (*s.truth - s.prior.mean()).cwiseAbs().maxCoeff() + 6.0);
    return half;
}

// Inverse-CDF draw of a cell index from nonnegative weights.
class CellSampler {
public:
    explicit CellSampler(const std::vector<double>& weights) : cdf_(weights.size()) {
        std::partial_sum(weights.begin(), weights.end(), cdf_.begin());
        if (cdf_.empty() || !(cdf_.back() > 0.0))
            throw std::runtime_error("reference sampler: posterior mass vanishes on the grid");
    }
    std::size_t draw(std::mt19937_64& rng) const {
        std::uniform_real_distribution<double> u(0.0, cdf_.back());
        const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u(rng));
        return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
    }

private:
    std::vector<double> cdf_;
};

}  // namespace

double range_observation(const Vector& truth, double noise_variance, std::optional<std::uint64_t> noise_seed) {
    double z = truth.norm();
    if (noise_seed) {
        std::mt19937_64 rng(*noise_seed);
        std::normal_distribution<double> noise(0.0, std::sqrt(noise_variance));
        z += noise(rng);
    }
    return z;
}

Scenario scenario_paper_full() {
    Scenario s{.name = "paper_full",
               .description = "range observation with cone (field of view) and circle constraints",
               .prior = range_prior(),
               .likelihood = RangeLikelihood{1.0, range_observation(range_truth(), 1.0, std::nullopt)},
               .truth = range_truth(),
               .constraints = {fov_cone(), range_circle()},
               .config = base_flow_config(),
               .unconstrained_baseline = true,
               .projection_baseline = true};
    return s;
}

Scenario scenario_inequality_only() {
    Scenario s = scenario_paper_full();
    s.name = "inequality_only";
    s.description = "range observation with the cone constraint only";
    s.constraints = {fov_cone()};
    return s;
}

Scenario scenario_conjugate_sanity() {
    const Vector truth = (Vector(2) << 3.0, -2.0).finished();
    Matrix prior_cov(2, 2);
    prior_cov << 3.0, -1.0, -1.0, 3.0;
    LinearGaussianLikelihood lik(Matrix::Identity(2, 2), 3.0 * Matrix::Identity(2, 2), truth);
    SafeFlowConfig c = base_flow_config();
    c.particles = 500;
    c.horizon = 30.0;
    c.dt = 0.05;
    c.snapshot_every = 100;
    Scenario s{.name = "conjugate_sanity",
               .description = "linear-Gaussian observation with a closed-form posterior, no constraints",
               .prior = GaussianPrior(Vector::Zero(2), prior_cov, StateSpace::cube(2, 1e3)),
               .likelihood = std::move(lik),
               .truth = truth,
               .constraints = {},
               .config = c,
               .unconstrained_baseline = false,
               .projection_baseline = false};
    return s;
}

std::vector<std::string> scenario_names() { return {"paper_full", "inequality_only", "conjugate_sanity"}; }

Scenario scenario_by_name(const std::string& name) {
    if (name == "paper_full") return scenario_paper_full();
    if (name == "inequality_only") return scenario_inequality_only();
    if (name == "conjugate_sanity") return scenario_conjugate_sanity();
    throw std::invalid_argument("unknown scenario '" + name + "'");
}

int intrinsic_dimension(const Scenario& scenario) {
    int dim = scenario.prior.dim();
    for (const Constraint& c : scenario.constraints) {
        if (c.kind == ConstraintKind::equality_generator) --dim;
    }
    return std::max(dim, 1);
}

FeasibilityScan feasibility_scan(const Scenario& scenario, std::size_t samples) {
    const int n = scenario.prior.dim();
    const ConstraintSet set = scenario.constraint_set();
    const double half = window_half_width(scenario);
    FeasibilityScan scan;

    auto check = [&](const VectorRef& candidate) {
        ++scan.scanned;
        Vector x;
        try {
            x = project_all(scenario.constraints, candidate);
            const Vector g = set.values(x);
            const double tol = 1e-8 * (1.0 + x.squaredNorm());
            if ((g.array() >= -tol).all() && scenario.prior.truncation().contains(x)) ++scan.feasible;
        } catch (const ConstraintError&) {
            // singular candidate: not feasible
        }
    };

    if (n == 2) {
        const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(samples))));
        for (std::size_t a = 0; a < side; ++a) {
            for (std::size_t b = 0; b < side; ++b) {
                Vector x(2);
                x[0] = scenario.prior.mean()[0] - half + (static_cast<double>(a) + 0.5) * 2.0 * half / static_cast<double>(side);
                x[1] = scenario.prior.mean()[1] - half + (static_cast<double>(b) + 0.5) * 2.0 * half / static_cast<double>(side);
                check(x);
            }
        }
    } else {
        std::mt19937_64 rng(12345);
        std::uniform_real_distribution<double> u(-half, half);
        for (std::size_t k = 0; k < samples; ++k) {
            Vector x = scenario.prior.mean();
            for (int i = 0; i < n; ++i) x[i] += u(rng);
            check(x);
        }
    }
    return scan;
}

ProjectionStep projection_baseline_step(const ParticleEnsemble& ensemble, const TargetModel& model,
                                        const RbfKernel& kernel, const std::vector<Constraint>& raw_constraints,
                                        double dt, IntegratorKind integrator, int workers) {
    const ConstraintSet none;
    SafetyOptions options;
    options.workers = workers;
    auto field = [&](const Matrix& states) {
        return flow_rhs(ParticleEnsemble(states, ensemble.time), model, kernel, none, options).field.vectors;
    };
    const Matrix& x = ensemble.states;
    Matrix next;
    if (integrator == IntegratorKind::euler) {
        next = x + dt * field(x);
    } else {
        const Matrix k1 = field(x);
        const Matrix k2 = field(x + 0.5 * dt * k1);
        const Matrix k3 = field(x + 0.5 * dt * k2);
        const Matrix k4 = field(x + dt * k3);
        next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }

    ProjectionStep out{ParticleEnsemble(std::move(next), ensemble.time + dt), 0};
    for (Eigen::Index j = 0; j < out.ensemble.size(); ++j) {
        try {
            out.ensemble.states.col(j) = project_all(raw_constraints, out.ensemble.particle(j));
        } catch (const ConstraintError&) {
            ++out.unprojected;
        }
    }
    return out;
}

FlowRun run_projection_baseline(const SafeFlowConfig& config, const TargetModel& model,
                                const std::vector<Constraint>& raw_constraints, const ParticleEnsemble& initial,
                                std::size_t* unprojected_total) {
    config.validate();
    const ConstraintSet set = expand(raw_constraints);
    const RbfKernel kernel = config.kernel();
    FlowRun out;
    out.config = config;
    out.trace.labels = set.labels();
    const std::size_t steps = config.step_count();
    out.totals.steps = steps;
    std::size_t unprojected = 0;

    ParticleEnsemble current(initial.states, 0.0);
    out.snapshots.push_back(current);
    const SafetyStats no_controls{static_cast<std::size_t>(initial.size())};
    for (std::size_t step = 0; step < steps; ++step) {
        const double h = step + 1 == steps ? config.horizon - current.time : config.dt;
        if (step % static_cast<std::size_t>(config.trace_every) == 0)
            record_trace_point(out.trace, current, set, config.tol_violation, no_controls);
        ProjectionStep next;
        try {
            next = projection_baseline_step(current, model, kernel, raw_constraints, h, config.integrator,
                                            config.workers);
        } catch (const ModelError& e) {
            throw NumericalAbort(std::string("model evaluation failed: ") + e.what(), step, -1);
        }
        out.totals.rhs_evaluations += config.integrator == IntegratorKind::rk4 ? 4 : 1;
        unprojected += next.unprojected;
        current = std::move(next.ensemble);
        current.time = step + 1 == steps ? config.horizon : static_cast<double>(step + 1) * config.dt;
        for (Eigen::Index j = 0; j < current.size(); ++j) {
            if (!current.particle(j).allFinite())
                throw NumericalAbort("non-finite state in projection baseline", step + 1, j);
            current.states.col(j) =
                current.particle(j).cwiseMax(model.space().lower()).cwiseMin(model.space().upper());
        }
        if ((step + 1) % static_cast<std::size_t>(config.snapshot_every) == 0 || step + 1 == steps)
            out.snapshots.push_back(current);
    }
    record_trace_point(out.trace, current, set, config.tol_violation, no_controls);
    out.final = current;
    if (unprojected_total) *unprojected_total = unprojected;
    return out;
}

Matrix reference_posterior_samples(const Scenario& scenario, Eigen::Index count, std::uint64_t seed) {
    if (scenario.prior.dim() != 2)
        throw std::invalid_argument("reference_posterior_samples: only 2-D scenarios are supported");
    const TargetModel target = scenario.target();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<const Constraint*> equalities;
    for (const Constraint& c : scenario.constraints) {
        if (c.kind == ConstraintKind::equality_generator) equalities.push_back(&c);
    }
    Matrix out(2, count);

    if (!equalities.empty()) {
        const auto* sphere = equalities.size() == 1 ? std::get_if<SphereShape>(&equalities.front()->shape) : nullptr;
        if (!sphere)
            throw std::invalid_argument("reference_posterior_samples: only a single circle equality is supported");
        const double r = sphere->radius;
        constexpr std::size_t kCells = 20000;
        const double width = 2.0 * std::numbers::pi / static_cast<double>(kCells);
        auto point = [r](double theta) { return (Vector(2) << r * std::cos(theta), r * std::sin(theta)).finished(); };
        std::vector<double> logw(kCells);
        double max_logw = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < kCells; ++k) {
            const Vector x = point((static_cast<double>(k) + 0.5) * width);
            logw[k] = satisfies_inequalities(scenario.constraints, x) ? target.log_joint(x)
                                                                      : -std::numeric_limits<double>::infinity();
            max_logw = std::max(max_logw, logw[k]);
        }
        std::vector<double> w(kCells);
        for (std::size_t k = 0; k < kCells; ++k) w[k] = std::exp(logw[k] - max_logw);
        const CellSampler sampler(w);
        for (Eigen::Index j = 0; j < count; ++j) {
            const std::size_t k = sampler.draw(rng);
            Vector x = point((static_cast<double>(k) + unit(rng)) * width);
            if (!satisfies_inequalities(scenario.constraints, x)) x = point((static_cast<double>(k) + 0.5) * width);
            out.col(j) = x;
        }
        return out;
    }

    constexpr std::size_t kSide = 600;
    const double half = window_half_width(scenario);
    const double cell = 2.0 * half / static_cast<double>(kSide);
    const Vector origin = scenario.prior.mean().array() - half;
    auto center = [&](std::size_t a, std::size_t b) {
        return (Vector(2) << origin[0] + (static_cast<double>(a) + 0.5) * cell,
                origin[1] + (static_cast<double>(b) + 0.5) * cell)
            .finished();
    };
    std::vector<double> logw(kSide * kSide);
    double max_logw = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < kSide; ++a) {
        for (std::size_t b = 0; b < kSide; ++b) {
            const Vector x = center(a, b);
            double lw = -std::numeric_limits<double>::infinity();
            try {
                if (satisfies_inequalities(scenario.constraints, x)) lw = target.log_joint(x);
            } catch (const ConstraintError&) {
            }
            logw[a * kSide + b] = lw;
            max_logw = std::max(max_logw, lw);
        }
    }
    std::vector<double> w(logw.size());
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = std::exp(logw[k] - max_logw);
    const CellSampler sampler(w);
    for (Eigen::Index j = 0; j < count; ++j) {
        const std::size_t k = sampler.draw(rng);
        const Vector c = center(k / kSide, k % kSide);
        Vector x = c;
        for (int attempt = 0; attempt < 8; ++attempt) {
            Vector candidate = c + cell * (Vector(2) << unit(rng) - 0.5, unit(rng) - 0.5).finished();
            bool ok = false;
            try {
                ok = satisfies_inequalities(scenario.constraints, candidate);
            } catch (const ConstraintError&) {
            }
            if (ok) {
                x = std::move(candidate);
                break;
            }
        }
        out.col(j) = x;
    }
    return out;
}

}  // namespace safeflow
