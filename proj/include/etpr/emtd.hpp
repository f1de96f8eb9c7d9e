#ifndef ETPR_EMTD_HPP
#define ETPR_EMTD_HPP

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "etpr/linalg.hpp"
#include "etpr/rng.hpp"

namespace etpr {

/// Extended multivariate t-distribution EMTD(nu, omega, mu, Sigma) with density
///   p(z) = |2 pi omega Sigma|^{-1/2} Gamma(n/2+nu)/Gamma(nu)
///          (1 + (z-mu)' Sigma^{-1} (z-mu) / (2 omega))^{-(n/2+nu)}.
/// Equivalently Z|r ~ N(mu, r Sigma) with r ~ IG(nu, omega). The mean exists
/// for nu > 1/2 and the covariance omega Sigma/(nu-1) for nu > 1; callers
/// query the capability flags instead of getting errors at nu = 1.05.
struct EmtdParams {
    double nu = 1.0;
    double omega = 1.0;
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;

    Eigen::Index dim() const { return mu.size(); }
    bool has_mean() const { return nu > 0.5; }
    bool has_covariance() const { return nu > 1.0; }
    Eigen::MatrixXd covariance() const {
        if (!has_covariance()) throw std::logic_error("emtd: covariance undefined for nu <= 1");
        return (omega / (nu - 1.0)) * sigma;
    }

    void require_valid() const {
        if (!(nu > 0.0) || !(omega > 0.0)) throw std::invalid_argument("emtd: nu and omega must be positive");
        if (sigma.rows() != sigma.cols() || sigma.rows() != mu.size())
            throw std::invalid_argument("emtd: sigma/mu dimension mismatch");
    }
};

struct InverseGammaParams {
    double shape = 1.0;  // nu
    double scale = 1.0;  // omega
};

inline double log_density(const Eigen::VectorXd& z, const EmtdParams& params) {
    params.require_valid();
    if (z.size() != params.dim()) throw std::invalid_argument("emtd log_density: dimension mismatch");
    const double n = static_cast<double>(params.dim());
    const auto llt = cholesky_with_jitter(params.sigma);
    const double q = quad_form(llt, z - params.mu);
    return -0.5 * (n * std::log(2.0 * M_PI * params.omega) + log_det_from_llt(llt)) +
           std::lgamma(0.5 * n + params.nu) - std::lgamma(params.nu) -
           (0.5 * n + params.nu) * std::log1p(q / (2.0 * params.omega));
}

/// A Z for full row rank A (Lemma-style affine closure): shape parameters
/// carry over, location and scale transform linearly.
inline EmtdParams affine(const EmtdParams& params, const Eigen::MatrixXd& A) {
    params.require_valid();
    if (A.cols() != params.dim()) throw std::invalid_argument("emtd affine: matrix width mismatch");
    if (A.rows() > A.cols()) throw std::invalid_argument("emtd affine: more rows than columns");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A.transpose());
    if (qr.rank() < A.rows()) throw std::invalid_argument("emtd affine: rank-deficient matrix");
    EmtdParams out;
    out.nu = params.nu;
    out.omega = params.omega;
    out.mu = A * params.mu;
    out.sigma = A * params.sigma * A.transpose();
    return out;
}

/// Marginal of the coordinates in idx (order preserved).
inline EmtdParams marginal(const EmtdParams& params, const std::vector<Eigen::Index>& idx) {
    params.require_valid();
    EmtdParams out;
    out.nu = params.nu;
    out.omega = params.omega;
    out.mu.resize(static_cast<Eigen::Index>(idx.size()));
    out.sigma.resize(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t a = 0; a < idx.size(); ++a) {
        out.mu(static_cast<Eigen::Index>(a)) = params.mu(idx[a]);
        for (std::size_t b = 0; b < idx.size(); ++b)
            out.sigma(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = params.sigma(idx[a], idx[b]);
    }
    return out;
}

/// Conditional law of the complement coordinates given Z[idx1] = z1:
///   nu*    = n1/2 + nu,
///   omega* = n1/2 + omega,
///   mu*    = Sigma21 Sigma11^{-1} (z1 - mu1) + mu2,
///   Sigma* = (2 omega + (z1-mu1)' Sigma11^{-1} (z1-mu1)) Sigma22.1 / (2 omega + n1),
/// with Sigma22.1 the Schur complement. The conditional covariance is
/// omega* Sigma* / (nu* - 1).
inline EmtdParams conditional(const EmtdParams& params, const std::vector<Eigen::Index>& idx1,
                              const Eigen::VectorXd& z1) {
    params.require_valid();
    const Eigen::Index n = params.dim();
    const Eigen::Index n1 = static_cast<Eigen::Index>(idx1.size());
    if (n1 < 1 || n1 >= n) throw std::invalid_argument("emtd conditional: idx1 must be a nonempty proper subset");
    if (z1.size() != n1) throw std::invalid_argument("emtd conditional: z1 length mismatch");

    std::vector<bool> in1(static_cast<std::size_t>(n), false);
    for (Eigen::Index i : idx1) {
        if (i < 0 || i >= n || in1[static_cast<std::size_t>(i)])
            throw std::invalid_argument("emtd conditional: bad index set");
        in1[static_cast<std::size_t>(i)] = true;
    }
    std::vector<Eigen::Index> idx2;
    for (Eigen::Index i = 0; i < n; ++i)
        if (!in1[static_cast<std::size_t>(i)]) idx2.push_back(i);
    const Eigen::Index n2 = static_cast<Eigen::Index>(idx2.size());

    Eigen::MatrixXd S11(n1, n1), S12(n1, n2), S22(n2, n2);
    Eigen::VectorXd mu1(n1), mu2(n2);
    for (Eigen::Index a = 0; a < n1; ++a) {
        mu1(a) = params.mu(idx1[static_cast<std::size_t>(a)]);
        for (Eigen::Index b = 0; b < n1; ++b)
            S11(a, b) = params.sigma(idx1[static_cast<std::size_t>(a)], idx1[static_cast<std::size_t>(b)]);
        for (Eigen::Index b = 0; b < n2; ++b)
            S12(a, b) = params.sigma(idx1[static_cast<std::size_t>(a)], idx2[static_cast<std::size_t>(b)]);
    }
    for (Eigen::Index a = 0; a < n2; ++a) {
        mu2(a) = params.mu(idx2[static_cast<std::size_t>(a)]);
        for (Eigen::Index b = 0; b < n2; ++b)
            S22(a, b) = params.sigma(idx2[static_cast<std::size_t>(a)], idx2[static_cast<std::size_t>(b)]);
    }

    const auto llt = cholesky_with_jitter(S11);
    const Eigen::VectorXd d1 = z1 - mu1;
    const Eigen::MatrixXd W = llt.solve(S12);  // Sigma11^{-1} Sigma12
    const double a1 = quad_form(llt, d1);

    EmtdParams out;
    out.nu = 0.5 * n1 + params.nu;
    out.omega = 0.5 * n1 + params.omega;
    out.mu = W.transpose() * d1 + mu2;
    Eigen::MatrixXd schur = S22 - S12.transpose() * W;
    out.sigma = ((2.0 * params.omega + a1) / (2.0 * params.omega + static_cast<double>(n1))) *
                0.5 * (schur + schur.transpose());
    return out;
}

/// Hierarchical draw: r ~ IG(nu, omega), then z ~ N(mu, r Sigma).
inline Eigen::VectorXd sample(const EmtdParams& params, Rng& rng) {
    params.require_valid();
    const double r = inverse_gamma_draw(rng, params.nu, params.omega);
    const auto llt = cholesky_with_jitter(params.sigma);
    Eigen::VectorXd xi(params.dim());
    for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = normal01(rng);
    return params.mu + std::sqrt(r) * (Eigen::MatrixXd(llt.matrixL()) * xi);
}

/// Posterior of the latent scale r given an observation of Z. The posterior
/// mean needs n/2+nu > 1 and the variance n/2+nu > 2; absent moments come
/// back as empty optionals rather than errors.
struct ScalePosterior {
    InverseGammaParams ig;
    std::optional<double> mean;
    std::optional<double> variance;
};

inline ScalePosterior posterior_r(const EmtdParams& params, const Eigen::VectorXd& z) {
    params.require_valid();
    if (z.size() != params.dim()) throw std::invalid_argument("emtd posterior_r: dimension mismatch");
    const double n = static_cast<double>(params.dim());
    const auto llt = cholesky_with_jitter(params.sigma);
    const double q = quad_form(llt, z - params.mu);

    ScalePosterior post;
    post.ig.shape = 0.5 * n + params.nu;
    post.ig.scale = params.omega + 0.5 * q;
    const double numer = 2.0 * params.omega + q;
    if (post.ig.shape > 1.0) post.mean = numer / (n + 2.0 * params.nu - 2.0);
    if (post.ig.shape > 2.0)
        post.variance = numer * numer /
                        ((n + 2.0 * params.nu - 2.0) * (n + 2.0 * params.nu - 2.0) * (0.5 * n + params.nu - 2.0));
    return post;
}

}  // namespace etpr

#endif  // ETPR_EMTD_HPP
