#pragma once

#include "safeflow/constraints.hpp"
#include "safeflow/drift.hpp"
#include "safeflow/types.hpp"

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace safeflow {

inline constexpr double kDefaultQpTolerance = 1e-8;

/// One CBF row a^T u >= b.
struct QpRow {
    Vector a;
    double b = 0.0;
};

/// min ||u||^2 subject to a_i^T u >= b_i.
struct QpProblem {
    Eigen::Index dim = 0;
    std::vector<QpRow> rows;
};

enum class QpStatus { optimal, infeasible };

struct QpSolution {
    Vector u;
    /// Rows in the KKT support, ascending. Empty iff u == 0.
    std::vector<int> active_set;
    /// Multipliers aligned with active_set; u = sum_k multipliers[k] a_{active_set[k]}.
    Vector multipliers;
    QpStatus status = QpStatus::infeasible;
    std::string diagnostic;

    bool optimal() const { return status == QpStatus::optimal; }
};

/// Rows a_i = grad g_i(x), b_i = -grad g_i(x)^T phi_d - alpha g_i(x) in set order.
QpProblem build_qp(const VectorRef& x, const VectorRef& desired, const ConstraintSet& set, double alpha);

/// Exact min-norm solution by enumerating linearly independent row subsets
/// (size 0..n, then lexicographic) and returning the first KKT point found.
/// Reports infeasible when no subset certifies optimality, or when a row
/// with ||a_i|| < 1e-12 demands b_i > tol.
QpSolution solve_min_norm(const QpProblem& qp, double tol = kDefaultQpTolerance);

/// Two-stage fallback for infeasible problems: the smallest shared slack s
/// making a_i^T u >= b_i - s feasible, then the min-norm u for that slack.
struct RelaxedQpSolution {
    QpSolution solution;
    double slack = 0.0;
};
RelaxedQpSolution solve_relaxed(const QpProblem& qp, double tol = kDefaultQpTolerance);

/// || u - sum_k lambda_k a_k || over the active set; +inf if any multiplier is negative.
double kkt_residual(const QpProblem& qp, const QpSolution& solution);

/// min_i (a_i^T u - b_i); +inf for an empty problem.
double min_row_margin(const QpProblem& qp, const VectorRef& u);

enum class InfeasibilityPolicy { relax, abort };

struct SafetyOptions {
    double alpha = 1.0;
    double tol_qp = kDefaultQpTolerance;
    InfeasibilityPolicy policy = InfeasibilityPolicy::relax;
    int workers = 1;
};

struct SafetyStats {
    std::size_t particles = 0;
    std::size_t nonzero_controls = 0;
    std::size_t relaxed_events = 0;
    double max_slack = 0.0;
    /// Smallest a_i^T (phi_d + u) + alpha g_i over all particles and rows.
    double min_cbf_margin = std::numeric_limits<double>::infinity();
};

struct SafeControls {
    DriftField controls;
    SafetyStats stats;
    /// Particles whose QP needed the slack fallback, ascending.
    std::vector<Eigen::Index> relaxed_particles;
};

/// Thrown by safe_controls under InfeasibilityPolicy::abort.
class QpInfeasibleError : public std::runtime_error {
public:
    QpInfeasibleError(const std::string& what, Eigen::Index particle)
        : std::runtime_error(what), particle_(particle) {}
    Eigen::Index particle() const noexcept { return particle_; }

private:
    Eigen::Index particle_;
};

/// Per-particle min-norm controls making desired + u satisfy every CBF row.
SafeControls safe_controls(const ParticleEnsemble& ensemble, const DriftField& desired, const ConstraintSet& set,
                           const SafetyOptions& options);

}  // namespace safeflow
