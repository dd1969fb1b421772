#include "safeflow/drift.hpp"

#include "safeflow/parallel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace safeflow {

namespace {
constexpr std::size_t kGramCacheLimit = 4096;
}  // namespace

DriftField stein_drift(const ParticleEnsemble& ensemble, const TargetModel& model, const RbfKernel& kernel,
                       int workers) {
    const Eigen::Index m = ensemble.size();
    if (m < 1) throw std::invalid_argument("stein_drift: ensemble is empty");
    Matrix scores(ensemble.dim(), m);
    for (Eigen::Index j = 0; j < m; ++j) {
        try {
            scores.col(j) = model.log_joint_grad(ensemble.particle(j));
        } catch (const ModelError& e) {
            throw ModelError("particle " + std::to_string(j) + ": " + e.what(), e.point());
        }
    }
    return stein_drift_from_scores(ensemble, scores, kernel, workers);
}

DriftField stein_drift_from_scores(const ParticleEnsemble& ensemble, const Matrix& scores, const RbfKernel& kernel,
                                   int workers) {
    const Eigen::Index m = ensemble.size();
    const Eigen::Index n = ensemble.dim();
    if (m < 1) throw std::invalid_argument("stein_drift: ensemble is empty");
    if (scores.rows() != n || scores.cols() != m)
        throw std::invalid_argument("stein_drift: score matrix shape does not match ensemble");

    const double c = kernel.exponent_scale();
    const double* x = ensemble.states.data();
    const auto mu = static_cast<std::size_t>(m);
    const auto nu = static_cast<std::size_t>(n);

    auto pair_kernel = [&](std::size_t i, std::size_t j) {
        const double* xi = x + i * nu;
        const double* xj = x + j * nu;
        double d2 = 0.0;
        for (std::size_t k = 0; k < nu; ++k) {
            const double d = xi[k] - xj[k];
            d2 += d * d;
        }
        return std::exp(-c * d2);
    };

    // k(x_i, x_j) is symmetric bit-for-bit, so below the cache limit only the
    // upper triangle is evaluated. Both paths produce identical values.
    const bool cache_gram = mu <= kGramCacheLimit;
    std::vector<double> gram;
    if (cache_gram) {
        gram.resize(mu * mu);
        parallel_for(mu, workers, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                gram[i * mu + i] = 1.0;
                for (std::size_t j = i + 1; j < mu; ++j) gram[i * mu + j] = pair_kernel(i, j);
            }
        });
        for (std::size_t i = 0; i < mu; ++i)
            for (std::size_t j = 0; j < i; ++j) gram[i * mu + j] = gram[j * mu + i];
    }

    DriftField out{Matrix(n, m)};
    const double* s = scores.data();
    double* phi = out.vectors.data();
    const double two_c = 2.0 * c;
    const double inv_m = 1.0 / static_cast<double>(m);
    parallel_for(mu, workers, [&](std::size_t begin, std::size_t end) {
        std::vector<double> acc(nu);
        for (std::size_t i = begin; i < end; ++i) {
            std::fill(acc.begin(), acc.end(), 0.0);
            const double* xi = x + i * nu;
            for (std::size_t j = 0; j < mu; ++j) {
                const double kij = cache_gram ? gram[i * mu + j] : (i == j ? 1.0 : pair_kernel(i, j));
                const double* xj = x + j * nu;
                const double* sj = s + j * nu;
                // grad_xi k(xi, x_i) at xi = x_j is 2c (x_i - x_j) k.
                for (std::size_t k = 0; k < nu; ++k) acc[k] += kij * (two_c * (xi[k] - xj[k]) + sj[k]);
            }
            for (std::size_t k = 0; k < nu; ++k) phi[i * nu + k] = acc[k] * inv_m;
        }
    });
    return out;
}

DriftField compose(const DriftField& desired, const DriftField& controls) {
    if (desired.vectors.rows() != controls.vectors.rows() || desired.vectors.cols() != controls.vectors.cols())
        throw std::invalid_argument("compose: drift fields have different shapes");
    return DriftField{desired.vectors + controls.vectors};
}

}  // namespace safeflow
