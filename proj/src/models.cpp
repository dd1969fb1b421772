#include "safeflow/models.hpp"

#include <cmath>
#include <sstream>
#include <type_traits>

namespace safeflow {

namespace {

std::string format_point(const VectorRef& x) {
    std::ostringstream os;
    os.precision(17);
    os << '[';
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (i) os << ", ";
        os << x[i];
    }
    os << ']';
    return os.str();
}

}  // namespace

StateSpace::StateSpace(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.size() == 0 || lower_.size() != upper_.size())
        throw std::invalid_argument("StateSpace: bounds must be non-empty and of equal dimension");
    for (Eigen::Index i = 0; i < lower_.size(); ++i) {
        if (!(lower_[i] < upper_[i]))
            throw std::invalid_argument("StateSpace: lower must be strictly below upper in every coordinate");
    }
}

StateSpace StateSpace::cube(int dim, double half_width) {
    return StateSpace(Vector::Constant(dim, -half_width), Vector::Constant(dim, half_width));
}

bool StateSpace::contains(const VectorRef& x, double slack) const {
    if (x.size() != lower_.size()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (!(x[i] >= lower_[i] - slack && x[i] <= upper_[i] + slack)) return false;
    }
    return true;
}

double StateSpace::boundary_tolerance() const { return 1e-9 * (upper_ - lower_).minCoeff(); }

Vector StateSpace::tangentialize(const VectorRef& x, const VectorRef& v) const {
    const double tol = boundary_tolerance();
    Vector out = v;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        if (x[i] >= upper_[i] - tol && out[i] > 0.0) out[i] = 0.0;
        if (x[i] <= lower_[i] + tol && out[i] < 0.0) out[i] = 0.0;
    }
    return out;
}

GaussianPrior::GaussianPrior(Vector mean, Matrix covariance, StateSpace truncation)
    : mean_(std::move(mean)), covariance_(std::move(covariance)), truncation_(std::move(truncation)) {
    const auto n = mean_.size();
    if (covariance_.rows() != n || covariance_.cols() != n || truncation_.dim() != n)
        throw std::invalid_argument("GaussianPrior: dimension mismatch between mean, covariance and truncation");
    if (!covariance_.isApprox(covariance_.transpose(), 1e-12))
        throw std::invalid_argument("GaussianPrior: covariance must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance_);
    if (eig.eigenvalues().minCoeff() <= 0.0)
        throw std::invalid_argument("GaussianPrior: covariance must be positive definite");
    Eigen::LLT<Matrix> llt(covariance_);
    chol_ = llt.matrixL();
    precision_ = llt.solve(Matrix::Identity(n, n));
    precision_ = 0.5 * (precision_ + precision_.transpose()).eval();
}

double GaussianPrior::log_density(const VectorRef& x) const {
    const Vector d = x - mean_;
    return -0.5 * d.dot(precision_ * d);
}

Vector GaussianPrior::grad_log_density(const VectorRef& x) const { return -(precision_ * (x - mean_)); }

double RangeLikelihood::log_density(const VectorRef& x) const {
    const double r = x.norm() - observation;
    return -0.5 * r * r / noise_variance;
}

Vector RangeLikelihood::grad_log_density(const VectorRef& x) const {
    const double radius = x.norm();
    if (radius < kRadiusGuard) return Vector::Zero(x.size());
    return (-(radius - observation) / (noise_variance * radius)) * x;
}

LinearGaussianLikelihood::LinearGaussianLikelihood(Matrix observation_matrix, Matrix noise_covariance,
                                                   Vector observation)
    : h_(std::move(observation_matrix)), r_(std::move(noise_covariance)), z_(std::move(observation)) {
    if (r_.rows() != h_.rows() || r_.cols() != h_.rows() || z_.size() != h_.rows())
        throw std::invalid_argument("LinearGaussianLikelihood: H, R and z dimensions disagree");
    Eigen::LLT<Matrix> llt(r_);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("LinearGaussianLikelihood: R must be positive definite");
    r_inv_ = llt.solve(Matrix::Identity(r_.rows(), r_.cols()));
}

double LinearGaussianLikelihood::log_density(const VectorRef& x) const {
    const Vector res = z_ - h_ * x;
    return -0.5 * res.dot(r_inv_ * res);
}

Vector LinearGaussianLikelihood::grad_log_density(const VectorRef& x) const {
    return h_.transpose() * (r_inv_ * (z_ - h_ * x));
}

TargetModel::TargetModel(StateSpace space, LogFn log_joint, GradFn grad, Vector observation,
                         std::string descriptor)
    : space_(std::move(space)),
      log_joint_(std::move(log_joint)),
      grad_(std::move(grad)),
      observation_(std::move(observation)),
      descriptor_(std::move(descriptor)) {}

double TargetModel::log_joint(const VectorRef& x) const { return log_joint_(x); }

Vector TargetModel::log_joint_grad(const VectorRef& x) const {
    Vector g = grad_(x);
    if (g.size() != x.size() || !g.allFinite())
        throw ModelError("non-finite log-density gradient at " + format_point(x), x);
    return g;
}

TargetModel make_target(const GaussianPrior& prior, const std::optional<Likelihood>& likelihood) {
    if (!likelihood) {
        return TargetModel(
            prior.truncation(), [prior](const VectorRef& x) { return prior.log_density(x); },
            [prior](const VectorRef& x) { return prior.grad_log_density(x); }, Vector(), "gaussian-prior");
    }
    return std::visit(
        [&prior](const auto& lik) {
            using L = std::decay_t<decltype(lik)>;
            Vector z;
            std::string name;
            if constexpr (std::is_same_v<L, RangeLikelihood>) {
                z = Vector::Constant(1, lik.observation);
                name = "gaussian-prior+range-likelihood";
            } else {
                z = lik.observation();
                name = "gaussian-prior+linear-gaussian-likelihood";
            }
            return TargetModel(
                prior.truncation(),
                [prior, lik](const VectorRef& x) { return prior.log_density(x) + lik.log_density(x); },
                [prior, lik](const VectorRef& x) -> Vector {
                    return prior.grad_log_density(x) + lik.grad_log_density(x);
                },
                std::move(z), std::move(name));
        },
        *likelihood);
}

GaussianPosterior conjugate_posterior(const GaussianPrior& prior, const LinearGaussianLikelihood& likelihood) {
    const Matrix& h = likelihood.observation_matrix();
    const Matrix r_inv = likelihood.noise_covariance().llt().solve(
        Matrix::Identity(h.rows(), h.rows()));
    const Matrix info = prior.precision() + h.transpose() * r_inv * h;
    Matrix cov = info.llt().solve(Matrix::Identity(info.rows(), info.cols()));
    cov = 0.5 * (cov + cov.transpose()).eval();
    Vector mean = cov * (prior.precision() * prior.mean() + h.transpose() * (r_inv * likelihood.observation()));
    return {std::move(mean), std::move(cov)};
}

}  // namespace safeflow
