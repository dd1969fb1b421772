#include "safeflow/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace safeflow {

Vector barrier_estimate(const ParticleEnsemble& ensemble, const ConstraintSet& set) {
    Vector h = Vector::Zero(static_cast<Eigen::Index>(set.size()));
    const Eigen::Index m = ensemble.size();
    if (m == 0) throw std::invalid_argument("barrier_estimate: ensemble is empty");
    for (Eigen::Index j = 0; j < m; ++j) {
        const Vector g = set.values(ensemble.particle(j));
        for (Eigen::Index i = 0; i < g.size(); ++i) {
            if (g[i] < 0.0) h[i] -= g[i];
        }
    }
    return h / static_cast<double>(m);
}

double violation_fraction(const ParticleEnsemble& ensemble, const ConstraintSet& set, double tolerance) {
    if (ensemble.size() == 0 || set.empty()) return 0.0;
    Eigen::Index count = 0;
    for (Eigen::Index j = 0; j < ensemble.size(); ++j) {
        if ((set.values(ensemble.particle(j)).array() < -tolerance).any()) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(ensemble.size());
}

DecayReport decay_check(const BarrierTrace& trace, double alpha, const Vector& slack) {
    if (trace.empty()) throw std::invalid_argument("decay_check: trace is empty");
    DecayReport report;
    report.alpha = alpha;
    report.slack = slack;
    const std::size_t n_constraints = static_cast<std::size_t>(trace.h.front().size());
    if (static_cast<std::size_t>(slack.size()) != n_constraints)
        throw std::invalid_argument("decay_check: slack size does not match the number of constraints");

    for (std::size_t k = 0; k + 1 < trace.size(); ++k) {
        const double dt = trace.times[k + 1] - trace.times[k];
        const double factor = std::exp(-alpha * dt);
        for (std::size_t i = 0; i < n_constraints; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            DecayViolation v;
            v.constraint = i;
            v.interval = k;
            v.t_start = trace.times[k];
            v.t_end = trace.times[k + 1];
            v.h_start = trace.h[k][ii];
            v.h_end = trace.h[k + 1][ii];
            v.bound = v.h_start * factor + slack[ii];
            if (v.h_end > v.bound) {
                report.pass = false;
                if (!report.worst || v.excess() > report.worst->excess()) report.worst = v;
                report.violations.push_back(v);
            }
        }
        ++report.intervals_checked;
    }
    return report;
}

DecayReport decay_check(const BarrierTrace& trace, double alpha, double slack) {
    if (trace.empty()) throw std::invalid_argument("decay_check: trace is empty");
    return decay_check(trace, alpha, Vector::Constant(trace.h.front().size(), slack));
}

Vector default_decay_slack(const BarrierTrace& trace) {
    if (trace.empty()) throw std::invalid_argument("default_decay_slack: trace is empty");
    return (0.05 * trace.h.front().array() + 1e-4).matrix();
}

std::string DecayReport::summary(const std::vector<std::string>& labels) const {
    std::ostringstream os;
    os.precision(6);
    os << "decay check (alpha = " << alpha << "): " << (pass ? "PASS" : "FAIL") << ", " << intervals_checked
       << " intervals, " << violations.size() << " violations";
    if (worst) {
        const std::string name =
            worst->constraint < labels.size() ? labels[worst->constraint] : "#" + std::to_string(worst->constraint);
        os << "\n  worst: constraint " << name << " on [" << worst->t_start << ", " << worst->t_end
           << "]: h " << worst->h_start << " -> " << worst->h_end << " exceeds bound " << worst->bound << " by "
           << worst->excess();
    }
    return os.str();
}

namespace {

// Distance from `point` to its k-th nearest column of `cloud`, skipping column `skip`.
double kth_distance(const VectorRef& point, const Matrix& cloud, int k, Eigen::Index skip,
                    std::vector<double>& scratch) {
    scratch.clear();
    for (Eigen::Index j = 0; j < cloud.cols(); ++j) {
        if (j == skip) continue;
        scratch.push_back((cloud.col(j) - point).squaredNorm());
    }
    std::nth_element(scratch.begin(), scratch.begin() + (k - 1), scratch.end());
    return std::sqrt(scratch[static_cast<std::size_t>(k - 1)]);
}

}  // namespace

double divergence_proxy(const Matrix& samples, const Matrix& reference, int k, int intrinsic_dim) {
    if (k < 1) throw std::invalid_argument("divergence_proxy: k must be positive");
    if (samples.rows() != reference.rows())
        throw std::invalid_argument("divergence_proxy: samples and reference differ in dimension");
    const Eigen::Index n = samples.cols();
    const Eigen::Index m = reference.cols();
    if (n < k + 1 || m < k + 1)
        throw std::invalid_argument("divergence_proxy: need at least k + 1 points in each sample");
    const double d = intrinsic_dim > 0 ? intrinsic_dim : static_cast<double>(samples.rows());

    // Coincident points would give log(0); floor distances at a tiny length.
    constexpr double kFloor = 1e-300;
    std::vector<double> scratch;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double rho = std::max(kth_distance(samples.col(i), samples, k, i, scratch), kFloor);
        const double nu = std::max(kth_distance(samples.col(i), reference, k, -1, scratch), kFloor);
        sum += std::log(nu / rho);
    }
    return d * sum / static_cast<double>(n) + std::log(static_cast<double>(m) / static_cast<double>(n - 1));
}

Matrix sample_gaussian(const Vector& mean, const Matrix& covariance, Eigen::Index count, std::uint64_t seed) {
    Eigen::LLT<Matrix> llt(covariance);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("sample_gaussian: covariance is not SPD");
    const Matrix l = llt.matrixL();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix out(mean.size(), count);
    Vector z(mean.size());
    for (Eigen::Index j = 0; j < count; ++j) {
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
        out.col(j) = mean + l * z;
    }
    return out;
}

}  // namespace safeflow
