#ifndef ETPR_PREDICT_HPP
#define ETPR_PREDICT_HPP

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "etpr/emtd.hpp"
#include "etpr/fit.hpp"

namespace etpr {

/// Pointwise predictive law at a new input: the latent mean mu*_n, the s0-
/// scaled latent variance sigma*_n, the response variance sigma*_n + s0 phi,
/// and the shifted shape parameters of the predictive heavy-tailed law.
struct Prediction {
    double mean = 0.0;
    double var_f = 0.0;
    double var_y = 0.0;
    double nu_star = 0.0;
    double omega_star = 0.0;
    bool clipped = false;
};

namespace detail {

inline double clip_variance(double v, bool& clipped) {
    if (v >= 0.0) return v;
    if (v < -1e-10) throw std::runtime_error("predict: computed variance below -1e-10; factorization unhealthy");
    clipped = true;
    return 0.0;
}

inline Prediction predict_point(const FittedModel& model, const Eigen::MatrixXd& X,
                                const Eigen::VectorXd& u, double s0, const Eigen::VectorXd& alpha) {
    const Eigen::VectorXd ku = kernel_cross(X, u, model.beta.kernel);
    const double kuu = kernel_eval(u, u, model.beta.kernel);
    const Eigen::VectorXd v = model.chol.matrixL().solve(ku);
    Prediction pred;
    pred.mean = ku.dot(alpha);
    const double raw = clip_variance(kuu - v.squaredNorm(), pred.clipped);
    pred.var_f = s0 * raw;
    pred.var_y = pred.var_f + s0 * model.beta.phi;
    const double n = static_cast<double>(X.rows());
    pred.nu_star = 0.5 * n + model.nu;
    pred.omega_star = 0.5 * n + model.nu - 1.0;
    return pred;
}

}  // namespace detail

/// BLUP of the latent function at the rows of U: mean k_u' alpha with the
/// cached alpha, variance s0 (k(u,u) - k_u' Sigma_tilde^{-1} k_u). Under
/// GPR s0 is pinned to 1, so the means of the two model kinds coincide at
/// equal beta and only the variances differ.
inline std::vector<Prediction> predict_f(const FittedModel& model, const Dataset& data,
                                         const Eigen::MatrixXd& U) {
    if (U.cols() != data.p()) throw std::invalid_argument("predict_f: test covariate dimension mismatch");
    if (data.n() != model.alpha.size()) throw std::invalid_argument("predict_f: model was fitted on different data");
    std::vector<Prediction> out;
    out.reserve(static_cast<std::size_t>(U.rows()));
    for (Eigen::Index i = 0; i < U.rows(); ++i)
        out.push_back(detail::predict_point(model, data.X, U.row(i).transpose(), model.s0, model.alpha));
    return out;
}

/// Same means as predict_f; the reported variance is the response variance
/// sigma*_n + s0 phi.
inline std::vector<Prediction> predict_y(const FittedModel& model, const Dataset& data,
                                         const Eigen::MatrixXd& U) {
    return predict_f(model, data, U);
}

/// Posterior of the latent values at the training inputs:
/// EMTD(n/2+nu, n/2+nu-1, K alpha, s0 phi K Sigma_tilde^{-1}).
inline EmtdParams latent_posterior(const FittedModel& model, const Dataset& data) {
    if (data.n() != model.alpha.size())
        throw std::invalid_argument("latent_posterior: model was fitted on different data");
    const Eigen::Index n = data.n();
    const Eigen::MatrixXd K = kernel_matrix(data.X, model.beta.kernel, 0.0);
    EmtdParams post;
    post.nu = 0.5 * static_cast<double>(n) + model.nu;
    post.omega = post.nu - 1.0;
    post.mu = K * model.alpha;
    const Eigen::MatrixXd A = model.s0 * model.beta.phi * (K * model.chol.solve(Eigen::MatrixXd::Identity(n, n)));
    post.sigma = 0.5 * (A + A.transpose());
    return post;
}

namespace detail {

// Acklam's rational approximation of the standard normal quantile.
inline double normal_quantile(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                               1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01,  -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    const double plow = 0.02425;
    double q, r;
    if (p < plow) {
        q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - plow) return -normal_quantile(1.0 - p);
    q = p - 0.5;
    r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// Regularized incomplete beta via the standard continued fraction.
inline double betacf(double a, double b, double x) {
    const int max_iter = 300;
    const double eps = 1e-14, fpmin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, dd = 1.0 - qab * x / qap;
    if (std::fabs(dd) < fpmin) dd = fpmin;
    dd = 1.0 / dd;
    double h = dd;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        dd = 1.0 + aa * dd;
        if (std::fabs(dd) < fpmin) dd = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        dd = 1.0 / dd;
        h *= dd * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        dd = 1.0 + aa * dd;
        if (std::fabs(dd) < fpmin) dd = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        dd = 1.0 / dd;
        const double del = dd * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                      b * std::log1p(-x);
    if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(ln) * betacf(a, b, x) / a;
    return 1.0 - std::exp(ln) * betacf(b, a, 1.0 - x) / b;
}

inline double student_t_cdf(double t, double dof) {
    const double x = dof / (dof + t * t);
    const double half = 0.5 * incomplete_beta(0.5 * dof, 0.5, x);
    return t > 0.0 ? 1.0 - half : half;
}

inline double student_t_quantile(double p, double dof) {
    double lo = -1e8, hi = 1e8;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (student_t_cdf(mid, dof) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

enum class IntervalStyle { Gaussian, EmtdExact };
enum class IntervalTarget { F, Y };

/// Two-sided interval mean +/- z sqrt(var). The default Gaussian critical
/// value follows the 1.96-at-95% convention; the exact heavy-tailed
/// predictive quantile (a rescaled Student t with 2 nu* dof) is opt-in.
inline std::pair<double, double> credible_interval(const Prediction& pred, double level,
                                                   IntervalTarget target = IntervalTarget::Y,
                                                   IntervalStyle style = IntervalStyle::Gaussian) {
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("credible_interval: level must be in (0,1)");
    const double var = target == IntervalTarget::Y ? pred.var_y : pred.var_f;
    double half;
    if (style == IntervalStyle::Gaussian) {
        const double z = std::fabs(level - 0.95) < 1e-12 ? 1.96 : detail::normal_quantile(0.5 * (1.0 + level));
        half = z * std::sqrt(var);
    } else {
        // EMTD(nu*, omega*, m, v) is m + sqrt(omega* v / nu*) T_{2 nu*}.
        const double t = detail::student_t_quantile(0.5 * (1.0 + level), 2.0 * pred.nu_star);
        half = t * std::sqrt(pred.omega_star * var / pred.nu_star);
    }
    return {pred.mean - half, pred.mean + half};
}

/// One-step-ahead factorization of the marginal law: sum of conditional
/// log-densities p(y_i | y_1..y_{i-1}), which reproduces marginal_loglik
/// exactly for any data ordering.
inline double sequential_log_density(const Dataset& data, const ModelParams& beta,
                                     const ModelConfig& config) {
    data.require_consistent();
    const Eigen::Index n = data.n();
    Eigen::MatrixXd st = kernel_matrix(data.X, beta.kernel, config.jitter_rel * beta.kernel.theta0);
    st.diagonal().array() += beta.phi;
    const double nu = config.nu;
    const double omega = nu - 1.0;

    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        EmtdParams joint;
        joint.nu = nu;
        joint.omega = omega;
        joint.mu = Eigen::VectorXd::Zero(i + 1);
        joint.sigma = st.topLeftCorner(i + 1, i + 1);
        EmtdParams law;
        if (i == 0) {
            law = joint;
        } else {
            std::vector<Eigen::Index> idx1(static_cast<std::size_t>(i));
            for (Eigen::Index k = 0; k < i; ++k) idx1[static_cast<std::size_t>(k)] = k;
            law = conditional(joint, idx1, data.y.head(i));
        }
        total += log_density(data.y.segment(i, 1), law);
    }
    return total;
}

/// Studentized statistic (f_hat(u) - f0(u)) / sqrt(Var f_hat(u)) for the
/// model's kind, recomputing alpha and s0 from the supplied responses so the
/// statistic can be swept over perturbed data at fixed beta. Zero variance
/// comes back as an empty optional.
inline std::optional<double> robust_statistic(const FittedModel& model, const Dataset& data,
                                              const Eigen::VectorXd& u, double f0_at_u) {
    if (data.n() != model.alpha.size())
        throw std::invalid_argument("robust_statistic: covariate set differs from the fitted one");
    const Eigen::VectorXd alpha = model.chol.solve(data.y);
    const double S = data.y.dot(alpha);
    const double n = static_cast<double>(data.n());
    const double s0 = model.kind == ModelKind::GPR ? 1.0 : detail::s0_from(S, n, model.nu);
    const Prediction pred = detail::predict_point(model, data.X, u, s0, alpha);
    if (pred.var_f <= 0.0) return std::nullopt;
    return (pred.mean - f0_at_u) / std::sqrt(pred.var_f);
}

}  // namespace etpr

#endif  // ETPR_PREDICT_HPP
