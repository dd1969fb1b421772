#pragma once

#include "safeflow/types.hpp"

#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace safeflow {

enum class ConstraintKind { inequality, equality_generator };

/// Geometry tags used when drawing constraint boundaries.
struct ConeShape {
    Vector direction;
    double half_angle;
};
struct SphereShape {
    double radius;
};
struct HalfspaceShape {
    Vector normal;
    double offset;
};
using ConstraintShape = std::variant<std::monostate, ConeShape, SphereShape, HalfspaceShape>;

/// A scalar barrier g(x) >= 0 (or g(x) = 0 for an equality generator).
struct Constraint {
    using ValueFn = std::function<double(const VectorRef&)>;
    using GradFn = std::function<Vector(const VectorRef&)>;
    using ProjectFn = std::function<Vector(const VectorRef&)>;

    std::string label;
    ValueFn g;
    GradFn grad_g;
    ConstraintKind kind = ConstraintKind::inequality;
    ConstraintShape shape;
    /// Optional exact projection onto {g = 0}; used by the projection baseline.
    ProjectFn project;
    /// Set on the two halves produced by expand(); such constraints cannot be expanded again.
    bool from_equality = false;

    double value(const VectorRef& x) const { return g(x); }
    Vector gradient(const VectorRef& x) const { return grad_g(x); }
};

/// Cosine clamp applied inside the cone's arccos.
inline constexpr double kConeCosineClamp = 1e-9;
/// Radius below which the cone constraint is undefined.
inline constexpr double kConeRadiusGuard = 1e-8;

/// g(x) = half_angle - arccos(d^T x / ||x||). Throws ConstraintError for ||x|| < 1e-8.
Constraint cone_constraint(const Vector& direction, double half_angle);

/// Equality generator g_e(x) = ||x||^2 - r^2.
Constraint sphere_equality(double radius);

/// g(x) = normal^T x - offset.
Constraint halfspace(const Vector& normal, double offset);

/// User-supplied g with a central finite-difference gradient
/// (step 1e-6 * (1 + ||x||)).
Constraint from_function(std::string label, Constraint::ValueFn g,
                         ConstraintKind kind = ConstraintKind::inequality);

/// Ordered inequality constraints, all equality generators already split into
/// (+g_e, -g_e) pairs.
class ConstraintSet {
public:
    ConstraintSet() = default;

    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    const Constraint& operator[](std::size_t i) const { return items_[i]; }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

    /// Values g_i(x) in set order.
    Vector values(const VectorRef& x) const;

    std::vector<std::string> labels() const;

private:
    friend ConstraintSet expand(std::span<const Constraint> constraints);
    std::vector<Constraint> items_;
};

/// Inequalities pass through; each equality generator becomes (+g_e, -g_e).
/// Throws std::invalid_argument if any input is itself the half of an
/// expanded pair.
ConstraintSet expand(std::span<const Constraint> constraints);

inline ConstraintSet expand(std::initializer_list<Constraint> constraints) {
    return expand(std::span<const Constraint>(constraints.begin(), constraints.size()));
}

/// max(0, -g_i(x)) per constraint.
Vector violation(const ConstraintSet& set, const VectorRef& x);

}  // namespace safeflow
