#include "safeflow/constraints.hpp"

#include "../oracles.hpp"

#include <doctest.h>

#include <numbers>
#include <random>

using namespace safeflow;

namespace {

Vector vec2(double a, double b) { return (Vector(2) << a, b).finished(); }

Vector fov_axis() { return vec2(std::sqrt(2.0) / 2.0, -std::sqrt(2.0) / 2.0); }

}  // namespace

TEST_SUITE("constraints") {

TEST_CASE("cone value on axis and off axis") {
    const Constraint cone = cone_constraint(fov_axis(), std::numbers::pi / 5);
    CHECK(cone.value(15.8 * fov_axis()) == doctest::Approx(std::numbers::pi / 5).epsilon(1e-4));
    const double off = cone.value(vec2(0, 10));
    CHECK(off < 0.0);
    CHECK(off == doctest::Approx(std::numbers::pi / 5 - 3 * std::numbers::pi / 4).epsilon(1e-9));
}

TEST_CASE("cone gradient at [5, 0]") {
    const Constraint cone = cone_constraint(fov_axis(), std::numbers::pi / 5);
    const Vector fd = oracle::central_difference([&](const Vector& x) { return cone.value(x); }, vec2(5, 0));
    CHECK(oracle::relative_error(cone.gradient(vec2(5, 0)), fd) <= 1e-5);
}

TEST_CASE("cone preconditions and singular set") {
    CHECK_THROWS_AS(cone_constraint(vec2(1, 1), 0.5), std::invalid_argument);
    CHECK_THROWS_AS(cone_constraint(fov_axis(), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(cone_constraint(fov_axis(), std::numbers::pi / 2), std::invalid_argument);
    const Constraint cone = cone_constraint(fov_axis(), 0.5);
    CHECK_THROWS_AS((void)cone.value(vec2(0, 0)), ConstraintError);
    CHECK_THROWS_AS((void)cone.gradient(vec2(1e-9, 0)), ConstraintError);
    // On the axis the clamp keeps the gradient finite.
    CHECK(cone.gradient(3.0 * fov_axis()).allFinite());
}

TEST_CASE("sphere equality examples") {
    const Constraint s = sphere_equality(15.8);
    CHECK(s.kind == ConstraintKind::equality_generator);
    CHECK(s.value(vec2(15.8, 0)) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(s.value(vec2(0, 0)) == doctest::Approx(-249.64));
    CHECK(s.gradient(vec2(3, 4)) == vec2(6, 8));
    CHECK(s.project(vec2(2 * 15.8, 0)).isApprox(vec2(15.8, 0)));
}

TEST_CASE("expand ordering and signs") {
    const Constraint cone = cone_constraint(fov_axis(), std::numbers::pi / 5);
    const Constraint sphere = sphere_equality(15.8);
    CHECK(expand({cone}).size() == 1);

    const ConstraintSet pair = expand({sphere});
    REQUIRE(pair.size() == 2);
    const Vector x = vec2(3, -7);
    CHECK(pair[0].gradient(x) == 2.0 * x);
    CHECK(pair[1].gradient(x) == -2.0 * x);
    CHECK(pair[0].value(x) == -pair[1].value(x));

    const ConstraintSet all = expand({cone, sphere});
    REQUIRE(all.size() == 3);
    CHECK(all.labels() == std::vector<std::string>{"cone", "sphere(+)", "sphere(-)"});
}

TEST_CASE("expanding an expanded set is rejected") {
    const ConstraintSet pair = expand({sphere_equality(2.0)});
    const std::vector<Constraint> again(pair.begin(), pair.end());
    CHECK_THROWS_AS(expand(again), std::invalid_argument);
}

TEST_CASE("expansion preserves the feasible set") {
    const ConstraintSet set = expand({sphere_equality(2.0), halfspace(vec2(1, 0), 0.0)});
    CHECK((set.values(vec2(2, 0)).array() >= 0).all());
    CHECK_FALSE((set.values(vec2(2.1, 0)).array() >= 0).all());
    CHECK_FALSE((set.values(vec2(-2, 0)).array() >= 0).all());
}

TEST_CASE("violation clamps negative values") {
    const ConstraintSet set = expand({halfspace(vec2(1, 0), 0.2), halfspace(vec2(0, 1), -0.5)});
    const Vector v = violation(set, vec2(0, 0));
    CHECK(v[0] == doctest::Approx(0.2));
    CHECK(v[1] == 0.0);
    CHECK(violation(set, vec2(1, 1)).isZero());

    const ConstraintSet sphere = expand({sphere_equality(15.8)});
    const Vector o = violation(sphere, vec2(0, 0));
    CHECK(o[0] == doctest::Approx(249.64));
    CHECK(o[1] == 0.0);
}

TEST_CASE("finite-difference constraint wrapper") {
    const Constraint c = from_function("disc", [](const VectorRef& x) { return 4.0 - x.squaredNorm(); });
    const Vector g = c.gradient(vec2(1, -0.5));
    CHECK(g.isApprox(vec2(-2, 1), 1e-8));
}

TEST_CASE("analytic constraint gradients match central differences at random points") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-30.0, 30.0);
    std::uniform_real_distribution<double> angle(0.05, 1.5);
    int checked = 0;
    for (int i = 0; i < 400 && checked < 200; ++i) {
        const Vector x = vec2(u(rng), u(rng));
        const double theta = angle(rng);
        const double phi = u(rng);
        const Vector d = vec2(std::cos(phi), std::sin(phi));
        // Skip the declared singular neighbourhoods: the apex and the cone axis.
        if (x.norm() < 1e-3 || std::abs(d.dot(x) / x.norm()) > 1.0 - 1e-6) continue;
        ++checked;
        const std::vector<Constraint> cs{cone_constraint(d, theta), sphere_equality(std::abs(phi) + 1.0),
                                         halfspace(vec2(phi, 1.0), theta)};
        const ConstraintSet set = expand(cs);
        for (const Constraint& c : set) {
            const Vector fd = oracle::central_difference([&](const Vector& y) { return c.value(y); }, x);
            CHECK(oracle::relative_error(c.gradient(x), fd) <= 1e-5);
        }
    }
    CHECK(checked == 200);
}

}
