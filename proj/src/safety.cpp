#include "safeflow/safety.hpp"

#include "safeflow/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace safeflow {

namespace {

constexpr double kDegenerateRowNorm = 1e-12;
constexpr double kRankThreshold = 1e-10;

bool row_satisfied(const QpRow& row, const VectorRef& u, double tol) {
    const double lhs = row.a.dot(u);
    const double scale = std::max({1.0, std::abs(row.b), row.a.norm() * u.norm()});
    return lhs - row.b >= -tol * scale;
}

bool all_rows_satisfied(const QpProblem& qp, const std::vector<int>& rows, const VectorRef& u, double tol) {
    return std::all_of(rows.begin(), rows.end(),
                       [&](int i) { return row_satisfied(qp.rows[static_cast<std::size_t>(i)], u, tol); });
}

// Advances `comb` (ascending indices into a pool of size `pool`) to the next
// combination in lexicographic order; false when exhausted.
bool next_combination(std::vector<int>& comb, int pool) {
    const int k = static_cast<int>(comb.size());
    int i = k - 1;
    while (i >= 0 && comb[static_cast<std::size_t>(i)] == pool - k + i) --i;
    if (i < 0) return false;
    ++comb[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
    return true;
}

void validate(const QpProblem& qp) {
    for (std::size_t i = 0; i < qp.rows.size(); ++i) {
        const QpRow& r = qp.rows[i];
        if (r.a.size() != qp.dim)
            throw std::invalid_argument("QP row " + std::to_string(i) + " has wrong dimension");
        if (!r.a.allFinite() || !std::isfinite(r.b))
            throw std::invalid_argument("QP row " + std::to_string(i) + " is not finite");
    }
}

}  // namespace

QpProblem build_qp(const VectorRef& x, const VectorRef& desired, const ConstraintSet& set, double alpha) {
    QpProblem qp;
    qp.dim = x.size();
    qp.rows.reserve(set.size());
    for (const Constraint& c : set) {
        Vector a = c.gradient(x);
        const double b = -a.dot(desired) - alpha * c.value(x);
        qp.rows.push_back({std::move(a), b});
    }
    return qp;
}

QpSolution solve_min_norm(const QpProblem& qp, double tol) {
    validate(qp);
    const Eigen::Index n = qp.dim;

    std::vector<int> regular;
    for (std::size_t i = 0; i < qp.rows.size(); ++i) {
        const QpRow& r = qp.rows[i];
        if (r.a.norm() < kDegenerateRowNorm) {
            if (r.b > tol) {
                QpSolution bad;
                bad.u = Vector::Zero(n);
                bad.status = QpStatus::infeasible;
                std::ostringstream os;
                os << "row " << i << " has a vanishing gradient but requires b = " << r.b;
                bad.diagnostic = os.str();
                return bad;
            }
            continue;
        }
        regular.push_back(static_cast<int>(i));
    }

    const int pool = static_cast<int>(regular.size());
    const int max_size = static_cast<int>(std::min<Eigen::Index>(n, pool));
    Vector u(n);
    for (int size = 0; size <= max_size; ++size) {
        std::vector<int> comb(static_cast<std::size_t>(size));
        std::iota(comb.begin(), comb.end(), 0);
        do {
            Matrix a_sub(size, n);
            Vector b_sub(size);
            for (int k = 0; k < size; ++k) {
                const QpRow& r = qp.rows[static_cast<std::size_t>(regular[static_cast<std::size_t>(comb[static_cast<std::size_t>(k)])])];
                a_sub.row(k) = r.a.transpose();
                b_sub[k] = r.b;
            }
            Vector lambda(size);
            if (size == 0) {
                u.setZero();
            } else {
                const Matrix gram = a_sub * a_sub.transpose();
                Eigen::FullPivLU<Matrix> lu(gram);
                lu.setThreshold(kRankThreshold);
                if (lu.rank() < size) continue;
                lambda = lu.solve(b_sub);
                const double lambda_scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
                if ((lambda.array() < -tol * lambda_scale).any()) continue;
                lambda = lambda.cwiseMax(0.0);
                u = a_sub.transpose() * lambda;
            }
            if (!all_rows_satisfied(qp, regular, u, tol)) continue;

            QpSolution sol;
            sol.u = u;
            sol.status = QpStatus::optimal;
            // Zero multipliers contribute nothing; the support is the rows actually used.
            for (int k = 0; k < size; ++k) {
                if (lambda[k] > 0.0) sol.active_set.push_back(regular[static_cast<std::size_t>(comb[static_cast<std::size_t>(k)])]);
            }
            sol.multipliers.resize(static_cast<Eigen::Index>(sol.active_set.size()));
            for (int k = 0, out = 0; k < size; ++k) {
                if (lambda[k] > 0.0) sol.multipliers[out++] = lambda[k];
            }
            if (sol.active_set.empty()) sol.u.setZero();
            return sol;
        } while (size > 0 && next_combination(comb, pool));
    }

    QpSolution none;
    none.u = Vector::Zero(n);
    none.status = QpStatus::infeasible;
    none.diagnostic = "no KKT point exists; the CBF rows are mutually inconsistent";
    return none;
}

RelaxedQpSolution solve_relaxed(const QpProblem& qp, double tol) {
    QpSolution direct = solve_min_norm(qp, tol);
    if (direct.optimal()) return {std::move(direct), 0.0};

    auto shifted = [&qp](double s) {
        QpProblem p = qp;
        for (QpRow& r : p.rows) r.b -= s;
        return p;
    };

    // u = 0 satisfies every row once s >= max_i b_i.
    double hi = 0.0;
    for (const QpRow& r : qp.rows) hi = std::max(hi, r.b);
    double lo = 0.0;
    for (int iter = 0; iter < 200 && hi - lo > tol * (1.0 + hi); ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (solve_min_norm(shifted(mid), tol).optimal())
            hi = mid;
        else
            lo = mid;
    }
    QpSolution relaxed = solve_min_norm(shifted(hi), tol);
    relaxed.diagnostic = direct.diagnostic;
    return {std::move(relaxed), hi};
}

double kkt_residual(const QpProblem& qp, const QpSolution& solution) {
    Vector combo = Vector::Zero(qp.dim);
    for (std::size_t k = 0; k < solution.active_set.size(); ++k) {
        const double lambda = solution.multipliers[static_cast<Eigen::Index>(k)];
        if (lambda < 0.0) return std::numeric_limits<double>::infinity();
        combo += lambda * qp.rows[static_cast<std::size_t>(solution.active_set[k])].a;
    }
    return (solution.u - combo).norm();
}

double min_row_margin(const QpProblem& qp, const VectorRef& u) {
    double margin = std::numeric_limits<double>::infinity();
    for (const QpRow& r : qp.rows) margin = std::min(margin, r.a.dot(u) - r.b);
    return margin;
}

SafeControls safe_controls(const ParticleEnsemble& ensemble, const DriftField& desired, const ConstraintSet& set,
                           const SafetyOptions& options) {
    const Eigen::Index m = ensemble.size();
    const Eigen::Index n = ensemble.dim();
    if (desired.vectors.rows() != n || desired.vectors.cols() != m)
        throw std::invalid_argument("safe_controls: desired drift does not match ensemble shape");

    SafeControls out;
    out.controls.vectors = Matrix::Zero(n, m);
    out.stats.particles = static_cast<std::size_t>(m);
    if (set.empty()) return out;

    std::mutex merge;
    parallel_for(static_cast<std::size_t>(m), options.workers, [&](std::size_t begin, std::size_t end) {
        SafetyStats local;
        std::vector<Eigen::Index> relaxed;
        for (std::size_t jj = begin; jj < end; ++jj) {
            const auto j = static_cast<Eigen::Index>(jj);
            const QpProblem qp = build_qp(ensemble.particle(j), desired.vectors.col(j), set, options.alpha);
            QpSolution sol = solve_min_norm(qp, options.tol_qp);
            if (!sol.optimal()) {
                if (options.policy == InfeasibilityPolicy::abort)
                    throw QpInfeasibleError("CBF QP infeasible at particle " + std::to_string(j) + ": " + sol.diagnostic, j);
                RelaxedQpSolution r = solve_relaxed(qp, options.tol_qp);
                sol = std::move(r.solution);
                ++local.relaxed_events;
                local.max_slack = std::max(local.max_slack, r.slack);
                relaxed.push_back(j);
            }
            if (!sol.active_set.empty()) ++local.nonzero_controls;
            local.min_cbf_margin = std::min(local.min_cbf_margin, min_row_margin(qp, sol.u));
            out.controls.vectors.col(j) = sol.u;
        }
        std::lock_guard lock(merge);
        out.stats.nonzero_controls += local.nonzero_controls;
        out.stats.relaxed_events += local.relaxed_events;
        out.stats.max_slack = std::max(out.stats.max_slack, local.max_slack);
        out.stats.min_cbf_margin = std::min(out.stats.min_cbf_margin, local.min_cbf_margin);
        out.relaxed_particles.insert(out.relaxed_particles.end(), relaxed.begin(), relaxed.end());
    });
    std::sort(out.relaxed_particles.begin(), out.relaxed_particles.end());
    return out;
}

}  // namespace safeflow
