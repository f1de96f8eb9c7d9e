#ifndef ETPR_LINALG_HPP
#define ETPR_LINALG_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <stdexcept>

namespace etpr {

/// Cholesky with an escalating diagonal jitter fallback (relative to the
/// largest diagonal entry). Throws when the matrix stays non-PD.
inline Eigen::LLT<Eigen::MatrixXd> cholesky_with_jitter(const Eigen::MatrixXd& M,
                                                        double rel_jitter = 1e-8) {
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() == Eigen::Success) return llt;
    const double scale = std::max(M.diagonal().maxCoeff(), 1e-300);
    double jitter = rel_jitter * scale;
    for (int attempt = 0; attempt < 3; ++attempt) {
        Eigen::MatrixXd Mj = M;
        Mj.diagonal().array() += jitter;
        llt.compute(Mj);
        if (llt.info() == Eigen::Success) return llt;
        jitter *= 100.0;
    }
    throw std::runtime_error("cholesky factorization failed: matrix not positive definite");
}

inline double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

/// (z)' M^{-1} (z) through one triangular solve against the cached factor.
inline double quad_form(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& z) {
    return llt.matrixL().solve(z).squaredNorm();
}

}  // namespace etpr

#endif  // ETPR_LINALG_HPP
