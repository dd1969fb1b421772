#include "safeflow/safety.hpp"

#include "../oracles.hpp"

#include <doctest.h>

#include <numbers>
#include <random>

using namespace safeflow;

namespace {

Vector vec2(double a, double b) { return (Vector(2) << a, b).finished(); }

QpProblem make_qp(std::initializer_list<std::pair<Vector, double>> rows) {
    QpProblem qp;
    qp.dim = rows.begin()->first.size();
    for (const auto& [a, b] : rows) qp.rows.push_back({a, b});
    return qp;
}

std::vector<oracle::Row> to_oracle(const QpProblem& qp) {
    std::vector<oracle::Row> out;
    for (const QpRow& r : qp.rows) out.push_back({r.a, r.b});
    return out;
}

}  // namespace

TEST_SUITE("safety") {

TEST_CASE("build_qp rows for a halfspace") {
    const ConstraintSet set = expand({halfspace(vec2(1, 0), 0.0)});
    const QpProblem inward = build_qp(vec2(0.5, 0), vec2(-2, 0), set, 1.0);
    REQUIRE(inward.rows.size() == 1);
    CHECK(inward.rows[0].a == vec2(1, 0));
    CHECK(inward.rows[0].b == doctest::Approx(1.5));
    const QpProblem outward = build_qp(vec2(0.5, 0), vec2(1, 0), set, 1.0);
    CHECK(outward.rows[0].b == doctest::Approx(-1.5));
    CHECK(solve_min_norm(outward).u.isZero());
}

TEST_CASE("equality pair rows are negations") {
    const ConstraintSet set = expand({sphere_equality(2.0)});
    const Vector x = vec2(1.0, 1.5);
    const Vector phi = vec2(0.3, -0.8);
    const QpProblem qp = build_qp(x, phi, set, 2.0);
    REQUIRE(qp.rows.size() == 2);
    CHECK(qp.rows[0].a == -qp.rows[1].a);
    CHECK(qp.rows[0].b == doctest::Approx(-qp.rows[1].b));
    const QpSolution sol = solve_min_norm(qp);
    REQUIRE(sol.optimal());
    // Both rows tight: grad g_e^T (phi + u) = -alpha g_e.
    const double g = x.squaredNorm() - 4.0;
    CHECK((2.0 * x).dot(phi + sol.u) == doctest::Approx(-2.0 * g).epsilon(1e-10));
}

TEST_CASE("closed-form cases") {
    CHECK(solve_min_norm(make_qp({{vec2(1, 0), -1.0}, {vec2(0, 1), 0.0}})).u.isZero());
    CHECK(solve_min_norm(make_qp({{vec2(1, 0), -1.0}})).active_set.empty());

    const QpSolution one = solve_min_norm(make_qp({{vec2(1, 0), 1.5}}));
    REQUIRE(one.optimal());
    CHECK(one.u.isApprox(vec2(1.5, 0)));
    CHECK(one.active_set == std::vector<int>{0});
    const auto grid = oracle::grid_min_norm_2d({{vec2(1, 0), 1.5}}, 3.0);
    REQUIRE(grid);
    CHECK(std::abs(grid->norm() - one.u.norm()) <= 1e-3);

    const QpSolution bad = solve_min_norm(make_qp({{vec2(1, 0), 1.0}, {vec2(-1, 0), 1.0}}));
    CHECK(bad.status == QpStatus::infeasible);
    CHECK_FALSE(bad.diagnostic.empty());
}

TEST_CASE("degenerate row") {
    const QpSolution bad = solve_min_norm(make_qp({{vec2(0, 0), 1.0}}));
    CHECK(bad.status == QpStatus::infeasible);
    CHECK(bad.diagnostic.find("vanishing gradient") != std::string::npos);
    CHECK(solve_min_norm(make_qp({{vec2(0, 0), -1.0}, {vec2(0, 2), 1.0}})).u.isApprox(vec2(0, 0.5)));
}

TEST_CASE("random problems match the primal oracle with valid KKT certificates") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::uniform_int_distribution<int> rows(1, 4);
    int feasible = 0;
    for (int trial = 0; trial < 500; ++trial) {
        QpProblem qp;
        qp.dim = 2;
        const int m = rows(rng);
        for (int i = 0; i < m; ++i) qp.rows.push_back({vec2(u(rng), u(rng)), u(rng)});
        const QpSolution sol = solve_min_norm(qp);
        const auto ref = oracle::min_norm_2d(to_oracle(qp));
        REQUIRE(sol.optimal() == ref.has_value());
        if (!ref) continue;
        ++feasible;
        CHECK((sol.u - *ref).norm() <= 1e-7 * (1.0 + ref->norm()));
        CHECK(kkt_residual(qp, sol) <= 1e-8);
        CHECK(min_row_margin(qp, sol.u) >= -1e-8 * (1.0 + sol.u.norm()));
        for (int idx : sol.active_set)
            CHECK(std::abs(qp.rows[static_cast<std::size_t>(idx)].a.dot(sol.u) - qp.rows[static_cast<std::size_t>(idx)].b) <=
                  1e-8 * (1.0 + sol.u.norm()));
        CHECK((sol.u.isZero() == sol.active_set.empty()));
    }
    CHECK(feasible > 100);
}

TEST_CASE("three-dimensional problems against projected gradient on the dual") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
        QpProblem qp;
        qp.dim = 3;
        for (int i = 0; i < 3; ++i) qp.rows.push_back({(Vector(3) << u(rng), u(rng), u(rng)).finished(), u(rng)});
        const QpSolution sol = solve_min_norm(qp);
        if (!sol.optimal()) continue;
        // Dual: max_{lambda >= 0} b^T lambda - |A^T lambda|^2 / 4 with u = A^T lambda / 2.
        Matrix a(3, 3);
        Vector b(3);
        for (int i = 0; i < 3; ++i) {
            a.row(i) = qp.rows[static_cast<std::size_t>(i)].a.transpose();
            b[i] = qp.rows[static_cast<std::size_t>(i)].b;
        }
        Vector lambda = Vector::Zero(3);
        const double step = 1.0 / (0.5 * (a * a.transpose()).eigenvalues().real().maxCoeff());
        for (int it = 0; it < 200000; ++it) {
            const Vector grad = b - 0.5 * a * (a.transpose() * lambda);
            lambda = (lambda + step * grad).cwiseMax(0.0);
        }
        const Vector ref = 0.5 * a.transpose() * lambda;
        CHECK(std::abs(sol.u.norm() - ref.norm()) <= 1e-6 * (1.0 + ref.norm()));
    }
}

TEST_CASE("relaxed fallback finds the smallest shared slack") {
    const QpProblem qp = make_qp({{vec2(1, 0), 1.0}, {vec2(-1, 0), 1.0}});
    const RelaxedQpSolution r = solve_relaxed(qp);
    REQUIRE(r.solution.optimal());
    CHECK(r.slack == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.solution.u.norm() <= 1e-6);
    const RelaxedQpSolution easy = solve_relaxed(make_qp({{vec2(1, 0), 1.0}}));
    CHECK(easy.slack == 0.0);
}

TEST_CASE("safe controls on an ensemble") {
    const Constraint cone = cone_constraint(vec2(std::sqrt(0.5), -std::sqrt(0.5)), std::numbers::pi / 5);
    const ConstraintSet set = expand({cone});
    Matrix x(2, 3);
    x.col(0) = vec2(10, -10);   // on the axis
    x.col(1) = vec2(12, -6);    // inside
    x.col(2) = vec2(0, 10);     // outside
    DriftField desired{Matrix(2, 3)};
    desired.vectors.col(0) = vec2(-1, -1) * 0.01;
    desired.vectors.col(1) = vec2(-0.1, 0.05);
    desired.vectors.col(2) = vec2(-1, 1);
    const SafeControls sc = safe_controls(ParticleEnsemble(x), desired, set, {});
    CHECK(sc.stats.particles == 3);
    CHECK(sc.stats.relaxed_events == 0);
    CHECK(sc.controls.vectors.col(0).isZero());
    CHECK(sc.controls.vectors.col(2).norm() > 0.0);
    for (Eigen::Index j = 0; j < 3; ++j) {
        const Vector total = desired.vectors.col(j) + sc.controls.vectors.col(j);
        CHECK(cone.gradient(x.col(j)).dot(total) + cone.value(x.col(j)) >= -1e-8);
    }
    CHECK(sc.stats.min_cbf_margin >= -1e-8);
}

TEST_CASE("filter is inactive deep inside the safe set") {
    const ConstraintSet set = expand({halfspace(vec2(1, 0), 0.0), halfspace(vec2(0, 1), 0.0)});
    const Matrix x = Matrix::Constant(2, 5, 3.0);
    const SafeControls sc = safe_controls(ParticleEnsemble(x), DriftField{Matrix::Constant(2, 5, 0.5)}, set, {});
    CHECK(sc.controls.vectors.isZero());
    CHECK(sc.stats.nonzero_controls == 0);
}

TEST_CASE("infeasibility policies") {
    const ConstraintSet set = expand({halfspace(vec2(1, 0), 1.0), halfspace(vec2(-1, 0), 1.0)});
    const Matrix x = Matrix::Zero(2, 2);
    const DriftField desired{Matrix::Zero(2, 2)};
    SafetyOptions relax;
    const SafeControls r = safe_controls(ParticleEnsemble(x), desired, set, relax);
    CHECK(r.stats.relaxed_events == 2);
    CHECK(r.relaxed_particles == std::vector<Eigen::Index>{0, 1});
    CHECK(r.stats.max_slack > 0.0);
    SafetyOptions abort = relax;
    abort.policy = InfeasibilityPolicy::abort;
    CHECK_THROWS_AS(safe_controls(ParticleEnsemble(x), desired, set, abort), QpInfeasibleError);
}

}
