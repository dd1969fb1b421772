#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the solver or drift code it is used to check.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline VectorXd central_difference(const std::function<double(const VectorXd&)>& f, const VectorXd& x,
                                   double h = 1e-5) {
    VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        VectorXd xp = x;
        VectorXd xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(xp) - f(xm)) / (2.0 * h);
    }
    return g;
}

/// |a - b| / max(|b|, floor); the floor keeps near-zero gradients from
/// turning finite-difference round-off into a huge ratio.
inline double relative_error(const VectorXd& a, const VectorXd& b, double floor = 1e-3) {
    return (a - b).norm() / std::max(b.norm(), floor);
}

struct Row {
    VectorXd a;
    double b;
};

inline bool rows_hold(const std::vector<Row>& rows, const VectorXd& u, double tol) {
    for (const Row& r : rows) {
        const double scale = std::max({1.0, std::abs(r.b), r.a.norm() * u.norm()});
        if (r.a.dot(u) - r.b < -tol * scale) return false;
    }
    return true;
}

/// Exact 2-D min-norm point of {u : a_i^T u >= b_i} by primal enumeration of
/// the candidates the projection of the origin can land on: the origin, the
/// foot of the perpendicular on each boundary line, and each pairwise vertex.
inline std::optional<VectorXd> min_norm_2d(const std::vector<Row>& rows, double tol = 1e-9) {
    std::vector<VectorXd> candidates{VectorXd::Zero(2)};
    for (const Row& r : rows) {
        if (r.a.squaredNorm() > 1e-24) candidates.push_back(r.a * (r.b / r.a.squaredNorm()));
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = i + 1; j < rows.size(); ++j) {
            Eigen::Matrix2d m;
            m.row(0) = rows[i].a.transpose();
            m.row(1) = rows[j].a.transpose();
            if (std::abs(m.determinant()) < 1e-12) continue;
            candidates.push_back(m.inverse() * Eigen::Vector2d(rows[i].b, rows[j].b));
        }
    }
    std::optional<VectorXd> best;
    for (const VectorXd& c : candidates) {
        if (!rows_hold(rows, c, tol)) continue;
        if (!best || c.norm() < best->norm()) best = c;
    }
    return best;
}

/// Dense lattice search over [-half, half]^2 with spacing `step`: the
/// smallest-norm lattice point satisfying every row. For each u1 column the
/// feasible u2 values form an interval, so every lattice point is covered
/// without visiting them one by one.
inline std::optional<VectorXd> grid_min_norm_2d(const std::vector<Row>& rows, double half = 5.0, double step = 1e-3) {
    const long n = std::lround(2.0 * half / step);
    const long k_center = n / 2;
    auto coord = [&](long k) { return -half + static_cast<double>(k) * step; };
    std::optional<VectorXd> best;
    double best_norm = std::numeric_limits<double>::infinity();
    for (long i = 0; i <= n; ++i) {
        const double u1 = coord(i);
        double lo = -half;
        double hi = half;
        bool empty = false;
        for (const Row& r : rows) {
            const double rhs = r.b - r.a[0] * u1;
            if (std::abs(r.a[1]) < 1e-15) {
                if (rhs > 0.0) empty = true;
            } else if (r.a[1] > 0.0) {
                lo = std::max(lo, rhs / r.a[1]);
            } else {
                hi = std::min(hi, rhs / r.a[1]);
            }
        }
        if (empty || lo > hi) continue;
        long kmin = static_cast<long>(std::ceil((lo + half) / step - 1e-9));
        long kmax = static_cast<long>(std::floor((hi + half) / step + 1e-9));
        kmin = std::max(kmin, 0L);
        kmax = std::min(kmax, n);
        if (kmin > kmax) continue;
        long k = std::clamp(k_center, kmin, kmax);
        // Confirm the chosen lattice point exactly; step inward on round-off.
        VectorXd u(2);
        bool found = false;
        for (int attempt = 0; attempt < 4 && !found; ++attempt) {
            u << u1, coord(k);
            found = rows_hold(rows, u, 1e-12);
            if (!found) k += (k == kmin ? 1 : -1);
            if (k < kmin || k > kmax) break;
        }
        if (!found) continue;
        if (u.norm() < best_norm) {
            best_norm = u.norm();
            best = u;
        }
    }
    return best;
}

/// KL(N(m0, S0) || N(m1, S1)).
inline double gaussian_kl(const VectorXd& m0, const MatrixXd& s0, const VectorXd& m1, const MatrixXd& s1) {
    const MatrixXd s1_inv = s1.inverse();
    const VectorXd d = m1 - m0;
    const double k = static_cast<double>(m0.size());
    return 0.5 * ((s1_inv * s0).trace() + d.dot(s1_inv * d) - k + std::log(s1.determinant() / s0.determinant()));
}

/// Gaussian draws as columns via an eigen square root (the library uses Cholesky).
inline MatrixXd gaussian_samples(const VectorXd& mean, const MatrixXd& cov, long count, unsigned seed) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
    const MatrixXd root = eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().asDiagonal();
    std::mt19937 rng(seed);
    std::normal_distribution<double> normal;
    MatrixXd out(mean.size(), count);
    for (long j = 0; j < count; ++j) {
        VectorXd z(mean.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
        out.col(j) = mean + root * z;
    }
    return out;
}

inline VectorXd sample_mean(const MatrixXd& cols) { return cols.rowwise().mean(); }

inline MatrixXd sample_covariance(const MatrixXd& cols) {
    const MatrixXd centered = cols.colwise() - sample_mean(cols);
    return centered * centered.transpose() / static_cast<double>(cols.cols() - 1);
}

}  // namespace oracle
