#include "safeflow/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace safeflow {

std::string_view to_string(BandwidthConvention c) {
    switch (c) {
        case BandwidthConvention::half_inverse_square: return "half_inverse_square";
        case BandwidthConvention::inverse_square: return "inverse_square";
    }
    return "unknown";
}

BandwidthConvention bandwidth_convention_from_string(std::string_view name) {
    if (name == "half_inverse_square") return BandwidthConvention::half_inverse_square;
    if (name == "inverse_square") return BandwidthConvention::inverse_square;
    throw std::invalid_argument("unknown bandwidth convention '" + std::string(name) + "'");
}

RbfKernel::RbfKernel(double bandwidth, BandwidthConvention convention)
    : bandwidth_(bandwidth), convention_(convention) {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
        throw std::invalid_argument("RbfKernel: bandwidth must be positive and finite");
    const double s2 = bandwidth * bandwidth;
    scale_ = convention == BandwidthConvention::half_inverse_square ? 1.0 / (2.0 * s2) : 1.0 / s2;
}

double RbfKernel::eval(const VectorRef& x, const VectorRef& y) const {
    return std::exp(-scale_ * (x - y).squaredNorm());
}

Vector RbfKernel::grad_first(const VectorRef& x, const VectorRef& y) const {
    const Vector diff = x - y;
    return (-2.0 * scale_ * std::exp(-scale_ * diff.squaredNorm())) * diff;
}

}  // namespace safeflow
