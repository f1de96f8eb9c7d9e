#ifndef ETPR_KERNEL_HPP
#define ETPR_KERNEL_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

namespace etpr {

/// Hyperparameters of the squared-exponential-plus-linear covariance
///   k(x, x') = theta0 exp(-1/2 sum_l theta1[l] (x_l - x'_l)^2)
///              + sum_l theta2[l] x_l x'_l.
/// theta1 components are inverse squared length-scales, theta2 components
/// scale the non-stationary linear trend.
struct KernelParams {
    double theta0 = 1.0;
    Eigen::VectorXd theta1;
    Eigen::VectorXd theta2;

    Eigen::Index dim() const { return theta1.size(); }

    static KernelParams constant(Eigen::Index p, double t0, double t1, double t2) {
        KernelParams k;
        k.theta0 = t0;
        k.theta1 = Eigen::VectorXd::Constant(p, t1);
        k.theta2 = Eigen::VectorXd::Constant(p, t2);
        return k;
    }

    // Fitting requires strictly positive components; evaluation tolerates
    // zeros (degenerate kernels show up in tests and limiting cases).
    void require_positive() const {
        if (theta1.size() != theta2.size())
            throw std::invalid_argument("kernel params: theta1/theta2 dimension mismatch");
        if (!(theta0 > 0.0) || (theta1.array() <= 0.0).any() || (theta2.array() <= 0.0).any())
            throw std::invalid_argument("kernel params: components must be strictly positive");
    }
};

namespace detail {
inline void check_dim(const KernelParams& params, Eigen::Index p, const char* who) {
    if (params.theta1.size() != p || params.theta2.size() != p)
        throw std::invalid_argument(std::string(who) + ": covariate dimension does not match kernel params");
}
}  // namespace detail

inline double kernel_eval(const Eigen::VectorXd& xi, const Eigen::VectorXd& xj,
                          const KernelParams& params) {
    if (xi.size() != xj.size()) throw std::invalid_argument("kernel_eval: point dimension mismatch");
    detail::check_dim(params, xi.size(), "kernel_eval");
    const Eigen::ArrayXd d = (xi - xj).array();
    const double expo = -0.5 * (params.theta1.array() * d.square()).sum();
    return params.theta0 * std::exp(expo) + (params.theta2.array() * xi.array() * xj.array()).sum();
}

/// theta0-free squared-exponential factor exp(-1/2 sum_l theta1[l] d_l^2).
inline Eigen::MatrixXd kernel_exp_part(const Eigen::MatrixXd& X, const KernelParams& params) {
    detail::check_dim(params, X.cols(), "kernel_exp_part");
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd E(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        E(i, i) = 1.0;
        for (Eigen::Index j = 0; j < i; ++j) {
            const Eigen::ArrayXd d = (X.row(i) - X.row(j)).transpose().array();
            const double e = std::exp(-0.5 * (params.theta1.array() * d.square()).sum());
            E(i, j) = e;
            E(j, i) = e;
        }
    }
    return E;
}

/// Entrywise -1/2 (x_il - x_jl)^2 for covariate l; the inner factor of
/// every theta1[l] derivative.
inline Eigen::MatrixXd kernel_sqdiff(const Eigen::MatrixXd& X, Eigen::Index l) {
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd D(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        D(i, i) = 0.0;
        for (Eigen::Index j = 0; j < i; ++j) {
            const double d = X(i, l) - X(j, l);
            D(i, j) = -0.5 * d * d;
            D(j, i) = D(i, j);
        }
    }
    return D;
}

inline Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& X, const KernelParams& params,
                                     double jitter = 0.0) {
    if (X.rows() < 1) throw std::invalid_argument("kernel_matrix: need at least one point");
    detail::check_dim(params, X.cols(), "kernel_matrix");
    Eigen::MatrixXd K = params.theta0 * kernel_exp_part(X, params);
    for (Eigen::Index l = 0; l < X.cols(); ++l)
        K.noalias() += params.theta2(l) * X.col(l) * X.col(l).transpose();
    K.diagonal().array() += jitter;
    return K;
}

inline Eigen::VectorXd kernel_cross(const Eigen::MatrixXd& X, const Eigen::VectorXd& u,
                                    const KernelParams& params) {
    if (X.cols() != u.size()) throw std::invalid_argument("kernel_cross: point dimension mismatch");
    Eigen::VectorXd k(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) k(i) = kernel_eval(u, X.row(i).transpose(), params);
    return k;
}

/// Analytic dK/dtheta, ordered [theta0, theta1_1..theta1_p, theta2_1..theta2_p].
inline std::vector<Eigen::MatrixXd> kernel_grad(const Eigen::MatrixXd& X,
                                                const KernelParams& params) {
    detail::check_dim(params, X.cols(), "kernel_grad");
    const Eigen::Index p = X.cols();
    std::vector<Eigen::MatrixXd> grads;
    grads.reserve(1 + 2 * p);
    const Eigen::MatrixXd E = kernel_exp_part(X, params);
    grads.push_back(E);
    for (Eigen::Index l = 0; l < p; ++l)
        grads.push_back(params.theta0 * E.cwiseProduct(kernel_sqdiff(X, l)));
    for (Eigen::Index l = 0; l < p; ++l)
        grads.push_back(X.col(l) * X.col(l).transpose());
    return grads;
}

}  // namespace etpr

#endif  // ETPR_KERNEL_HPP
