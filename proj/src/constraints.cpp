#include "safeflow/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace safeflow {

Constraint cone_constraint(const Vector& direction, double half_angle) {
    if (std::abs(direction.norm() - 1.0) > 1e-12)
        throw std::invalid_argument("cone_constraint: direction must be a unit vector");
    if (!(half_angle > 0.0 && half_angle < std::numbers::pi / 2))
        throw std::invalid_argument("cone_constraint: half_angle must lie in (0, pi/2)");

    auto cosine = [direction](const VectorRef& x, double& radius) {
        radius = x.norm();
        if (!(radius >= kConeRadiusGuard))
            throw ConstraintError("cone constraint evaluated at ||x|| < 1e-8");
        return direction.dot(x) / radius;
    };

    Constraint c;
    c.label = "cone";
    c.kind = ConstraintKind::inequality;
    c.shape = ConeShape{direction, half_angle};
    c.g = [cosine, half_angle](const VectorRef& x) {
        double radius = 0.0;
        const double cs = std::clamp(cosine(x, radius), -1.0 + kConeCosineClamp, 1.0 - kConeCosineClamp);
        return half_angle - std::acos(cs);
    };
    c.grad_g = [cosine, direction](const VectorRef& x) -> Vector {
        double radius = 0.0;
        const double raw = cosine(x, radius);
        const double cs = std::clamp(raw, -1.0 + kConeCosineClamp, 1.0 - kConeCosineClamp);
        // d/dx arccos(c) = -grad(c) / sqrt(1 - c^2), grad(c) = (d - c x/|x|) / |x|
        const Vector grad_cos = (direction - (raw / radius) * x) / radius;
        return grad_cos / std::sqrt(1.0 - cs * cs);
    };
    return c;
}

Constraint sphere_equality(double radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("sphere_equality: radius must be positive");
    Constraint c;
    c.label = "sphere";
    c.kind = ConstraintKind::equality_generator;
    c.shape = SphereShape{radius};
    c.g = [radius](const VectorRef& x) { return x.squaredNorm() - radius * radius; };
    c.grad_g = [](const VectorRef& x) -> Vector { return 2.0 * x; };
    c.project = [radius](const VectorRef& x) -> Vector {
        const double norm = x.norm();
        if (!(norm >= kConeRadiusGuard)) throw ConstraintError("sphere projection undefined at the origin");
        return (radius / norm) * x;
    };
    return c;
}

Constraint halfspace(const Vector& normal, double offset) {
    if (!(normal.norm() > 0.0)) throw std::invalid_argument("halfspace: normal must be nonzero");
    Constraint c;
    c.label = "halfspace";
    c.kind = ConstraintKind::inequality;
    c.shape = HalfspaceShape{normal, offset};
    c.g = [normal, offset](const VectorRef& x) { return normal.dot(x) - offset; };
    c.grad_g = [normal](const VectorRef&) -> Vector { return normal; };
    return c;
}

Constraint from_function(std::string label, Constraint::ValueFn g, ConstraintKind kind) {
    Constraint c;
    c.label = std::move(label);
    c.kind = kind;
    c.g = g;
    c.grad_g = [g](const VectorRef& x) -> Vector {
        const double h = 1e-6 * (1.0 + x.norm());
        Vector grad(x.size());
        Vector probe = x;
        for (Eigen::Index k = 0; k < x.size(); ++k) {
            probe[k] = x[k] + h;
            const double up = g(probe);
            probe[k] = x[k] - h;
            const double down = g(probe);
            probe[k] = x[k];
            grad[k] = (up - down) / (2.0 * h);
        }
        return grad;
    };
    return c;
}

Vector ConstraintSet::values(const VectorRef& x) const {
    Vector out(static_cast<Eigen::Index>(items_.size()));
    for (std::size_t i = 0; i < items_.size(); ++i) out[static_cast<Eigen::Index>(i)] = items_[i].g(x);
    return out;
}

std::vector<std::string> ConstraintSet::labels() const {
    std::vector<std::string> out;
    out.reserve(items_.size());
    for (const auto& c : items_) out.push_back(c.label);
    return out;
}

ConstraintSet expand(std::span<const Constraint> constraints) {
    ConstraintSet set;
    for (const Constraint& c : constraints) {
        if (c.from_equality)
            throw std::invalid_argument("expand: constraint '" + c.label + "' is already part of an expanded pair");
        if (c.kind == ConstraintKind::inequality) {
            set.items_.push_back(c);
            continue;
        }
        Constraint plus = c;
        plus.label = c.label + "(+)";
        plus.kind = ConstraintKind::inequality;
        plus.from_equality = true;

        Constraint minus = plus;
        minus.label = c.label + "(-)";
        minus.g = [g = c.g](const VectorRef& x) { return -g(x); };
        minus.grad_g = [grad = c.grad_g](const VectorRef& x) -> Vector { return -grad(x); };

        set.items_.push_back(std::move(plus));
        set.items_.push_back(std::move(minus));
    }
    return set;
}

Vector violation(const ConstraintSet& set, const VectorRef& x) {
    return set.values(x).cwiseMin(0.0).cwiseAbs();
}

}  // namespace safeflow
