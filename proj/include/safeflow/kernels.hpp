#pragma once

#include "safeflow/types.hpp"

#include <string_view>

namespace safeflow {

/// How the bandwidth enters the exponent.
enum class BandwidthConvention {
    half_inverse_square,  ///< exp(-|x-y|^2 / (2 sigma^2))
    inverse_square,       ///< exp(-|x-y|^2 / sigma^2)
};

std::string_view to_string(BandwidthConvention c);
BandwidthConvention bandwidth_convention_from_string(std::string_view name);

class RbfKernel {
public:
    explicit RbfKernel(double bandwidth,
                       BandwidthConvention convention = BandwidthConvention::half_inverse_square);

    double bandwidth() const { return bandwidth_; }
    BandwidthConvention convention() const { return convention_; }

    /// Coefficient c in k(x, y) = exp(-c |x-y|^2).
    double exponent_scale() const { return scale_; }

    double eval(const VectorRef& x, const VectorRef& y) const;

    /// Gradient with respect to the first argument: -2c (x - y) k(x, y).
    Vector grad_first(const VectorRef& x, const VectorRef& y) const;

    /// Gradient with respect to the second argument.
    Vector grad_second(const VectorRef& x, const VectorRef& y) const { return -grad_first(x, y); }

private:
    double bandwidth_;
    BandwidthConvention convention_;
    double scale_;
};

}  // namespace safeflow
