#ifndef ETPR_FIT_HPP
#define ETPR_FIT_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "etpr/dataset.hpp"
#include "etpr/kernel.hpp"
#include "etpr/linalg.hpp"
#include "etpr/rng.hpp"

namespace etpr {

enum class ModelKind { ETPR, GPR };

inline const char* to_string(ModelKind kind) { return kind == ModelKind::ETPR ? "etpr" : "gpr"; }

struct OptimizerConfig {
    int max_iters = 500;
    double grad_tol = 1e-6;
    double shrink = 0.5;  // backtracking factor of the line search
    int random_starts = 5;
    std::uint64_t start_seed = 20240613;
    double start_log_lo = std::log(1e-3);
    double start_log_hi = std::log(1e1);
    // Robust (heavy-tailed) estimation: reweighting passes and the inner
    // ascent budget per pass.
    int robust_max_passes = 60;
    int robust_inner_iters = 80;
    double robust_weight_tol = 1e-9;
};

/// How the heavy-tailed fit estimates beta. MarginalML ascends the closed
/// form marginal likelihood directly. With fixed nu and a kernel family
/// containing a free multiplicative scale, that estimator is exactly
/// prediction-equivalent to the Gaussian fit (the profiled objectives
/// coincide), so Robust - iteratively reweighted estimation with
/// per-observation inverse-gamma noise scales - is the default: it is the
/// variant that actually delivers robust fits, and it reduces to the
/// Gaussian fit as nu grows.
enum class Estimation { Robust, MarginalML };

/// nu is a fixed modeling constant (never estimated) and omega is pinned to
/// nu - 1 so that Var(f) = k matches the GP parametrization. kind = GPR
/// selects the Gaussian likelihood branch (s0 = s1 = 1).
struct ModelConfig {
    double nu = 1.05;
    ModelKind kind = ModelKind::ETPR;
    double jitter_rel = 1e-8;  // diagonal jitter = jitter_rel * theta0
    Estimation estimation = Estimation::Robust;
    OptimizerConfig opt;

    double omega() const { return nu - 1.0; }
    void validate() const {
        if (!(nu > 1.0)) throw std::invalid_argument("model config: nu must exceed 1");
        if (!(jitter_rel >= 0.0)) throw std::invalid_argument("model config: jitter must be nonnegative");
    }
};

/// beta = (phi, theta): noise variance plus kernel hyperparameters, packed
/// as [phi, theta0, theta1_1..theta1_p, theta2_1..theta2_p].
struct ModelParams {
    double phi = 1.0;
    KernelParams kernel;

    Eigen::Index dim() const { return 2 + 2 * kernel.dim(); }

    Eigen::VectorXd to_vector() const {
        Eigen::VectorXd v(dim());
        v(0) = phi;
        v(1) = kernel.theta0;
        v.segment(2, kernel.dim()) = kernel.theta1;
        v.segment(2 + kernel.dim(), kernel.dim()) = kernel.theta2;
        return v;
    }

    static ModelParams from_vector(const Eigen::VectorXd& v, Eigen::Index p) {
        if (v.size() != 2 + 2 * p) throw std::invalid_argument("model params: packed vector length mismatch");
        ModelParams out;
        out.phi = v(0);
        out.kernel.theta0 = v(1);
        out.kernel.theta1 = v.segment(2, p);
        out.kernel.theta2 = v.segment(2 + p, p);
        return out;
    }

    void require_positive() const {
        if (!(phi > 0.0)) throw std::invalid_argument("model params: phi must be strictly positive");
        kernel.require_positive();
    }
};

struct FitError : std::runtime_error {
    explicit FitError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

// Shared factorization state for one (beta, data) evaluation; `weights`
// scales the noise variance per observation (phi / w_i), with an empty or
// all-ones vector giving the plain Sigma_tilde = K + phi I.
struct LikelihoodWork {
    Eigen::LLT<Eigen::MatrixXd> llt;  // of Sigma_tilde (+ jitter)
    Eigen::VectorXd alpha;            // Sigma_tilde^{-1} y
    double S = 0.0;                   // y' Sigma_tilde^{-1} y
    double logdet = 0.0;
};

inline LikelihoodWork likelihood_work(const Dataset& data, const ModelParams& beta,
                                      const ModelConfig& config,
                                      const Eigen::VectorXd& weights = Eigen::VectorXd()) {
    Eigen::MatrixXd st = kernel_matrix(data.X, beta.kernel, config.jitter_rel * beta.kernel.theta0);
    if (weights.size() == 0)
        st.diagonal().array() += beta.phi;
    else
        st.diagonal() += (beta.phi / weights.array()).matrix();
    LikelihoodWork w;
    w.llt = cholesky_with_jitter(st, config.jitter_rel);
    w.alpha = w.llt.solve(data.y);
    w.S = data.y.dot(w.alpha);
    w.logdet = log_det_from_llt(w.llt);
    return w;
}

inline double s0_from(double S, double n, double nu) { return (S + 2.0 * (nu - 1.0)) / (n + 2.0 * (nu - 1.0)); }
inline double s1_from(double S, double n, double nu) { return (n + 2.0 * nu) / (2.0 * (nu - 1.0) + S); }

inline double loglik_from(const LikelihoodWork& w, double n, const ModelConfig& config) {
    if (config.kind == ModelKind::GPR)
        return -0.5 * n * std::log(2.0 * M_PI) - 0.5 * w.logdet - 0.5 * w.S;
    const double om = config.omega();
    return -0.5 * n * std::log(2.0 * M_PI * om) - 0.5 * w.logdet -
           (0.5 * n + config.nu) * std::log1p(w.S / (2.0 * om)) + std::lgamma(0.5 * n + config.nu) -
           std::lgamma(config.nu);
}

// dSigma_tilde/dbeta in packed order; entry 0 (phi) is the identity and is
// handled implicitly by callers.
inline std::vector<Eigen::MatrixXd> sigma_grads(const Dataset& data, const ModelParams& beta) {
    return kernel_grad(data.X, beta.kernel);
}

}  // namespace detail

/// Marginal log-likelihood l(beta; nu) of the responses. The heavy-tailed
/// branch follows the closed form with S = y' Sigma_tilde^{-1} y; the GPR
/// branch is the usual Gaussian marginal.
inline double marginal_loglik(const Dataset& data, const ModelParams& beta, const ModelConfig& config) {
    data.require_consistent();
    const auto w = detail::likelihood_work(data, beta, config);
    return detail::loglik_from(w, static_cast<double>(data.n()), config);
}

/// Score over log-parameters: d l / d log beta_i = beta_i / 2 *
/// Tr((s1 alpha alpha' - Sigma_tilde^{-1}) dSigma_tilde/dbeta_i).
inline Eigen::VectorXd score(const Dataset& data, const ModelParams& beta, const ModelConfig& config) {
    data.require_consistent();
    const Eigen::Index n = data.n();
    const auto w = detail::likelihood_work(data, beta, config);
    const double s1 = config.kind == ModelKind::GPR
                          ? 1.0
                          : detail::s1_from(w.S, static_cast<double>(n), config.nu);
    const Eigen::MatrixXd sinv = w.llt.solve(Eigen::MatrixXd::Identity(n, n));
    const auto grads = detail::sigma_grads(data, beta);
    const Eigen::VectorXd bvec = beta.to_vector();

    Eigen::VectorXd g(beta.dim());
    g(0) = 0.5 * (s1 * w.alpha.squaredNorm() - sinv.trace());
    for (std::size_t k = 0; k < grads.size(); ++k) {
        const double quad = w.alpha.dot(grads[k] * w.alpha);
        const double tr = sinv.cwiseProduct(grads[k]).sum();
        g(static_cast<Eigen::Index>(k) + 1) = 0.5 * (s1 * quad - tr);
    }
    return bvec.asDiagonal() * g;
}

/// Hessian of the marginal log-likelihood over log-parameters, from the
/// closed-form second derivatives (including the second-derivative kernel
/// term and the squared-trace correction of the heavy-tailed branch).
inline Eigen::MatrixXd hessian(const Dataset& data, const ModelParams& beta, const ModelConfig& config) {
    data.require_consistent();
    const Eigen::Index n = data.n();
    const Eigen::Index p = data.p();
    const Eigen::Index d = beta.dim();
    const auto w = detail::likelihood_work(data, beta, config);
    const double nn = static_cast<double>(n);
    const bool gaussian = config.kind == ModelKind::GPR;
    const double s1 = gaussian ? 1.0 : detail::s1_from(w.S, nn, config.nu);
    const double c2 = gaussian ? 0.0
                               : (nn + 2.0 * config.nu) /
                                     ((2.0 * (config.nu - 1.0) + w.S) * (2.0 * (config.nu - 1.0) + w.S));

    const Eigen::MatrixXd sinv = w.llt.solve(Eigen::MatrixXd::Identity(n, n));

    // First derivatives of Sigma_tilde, with phi prepended as the identity.
    std::vector<Eigen::MatrixXd> G;
    G.reserve(static_cast<std::size_t>(d));
    G.push_back(Eigen::MatrixXd::Identity(n, n));
    for (auto& m : detail::sigma_grads(data, beta)) G.push_back(std::move(m));

    std::vector<Eigen::MatrixXd> A(static_cast<std::size_t>(d));   // Sigma^{-1} G_i
    std::vector<Eigen::VectorXd> Ga(static_cast<std::size_t>(d));  // G_i alpha
    for (Eigen::Index i = 0; i < d; ++i) {
        A[static_cast<std::size_t>(i)] = w.llt.solve(G[static_cast<std::size_t>(i)]);
        Ga[static_cast<std::size_t>(i)] = G[static_cast<std::size_t>(i)] * w.alpha;
    }

    // Nonzero second derivatives of Sigma_tilde: (theta0, theta1_l) and
    // (theta1_l, theta1_m) pairs only.
    const Eigen::MatrixXd E = kernel_exp_part(data.X, beta.kernel);
    std::vector<Eigen::MatrixXd> D(static_cast<std::size_t>(p));
    for (Eigen::Index l = 0; l < p; ++l) D[static_cast<std::size_t>(l)] = kernel_sqdiff(data.X, l);
    const auto second_deriv = [&](Eigen::Index i, Eigen::Index j) -> Eigen::MatrixXd {
        const auto kind = [p](Eigen::Index k) { return k == 1 ? 0 : (k >= 2 && k < 2 + p ? 1 : 2); };
        const Eigen::Index ki = kind(i), kj = kind(j);
        if (ki == 0 && kj == 1) return E.cwiseProduct(D[static_cast<std::size_t>(j - 2)]);
        if (ki == 1 && kj == 0) return E.cwiseProduct(D[static_cast<std::size_t>(i - 2)]);
        if (ki == 1 && kj == 1)
            return beta.kernel.theta0 * E.cwiseProduct(D[static_cast<std::size_t>(i - 2)])
                       .cwiseProduct(D[static_cast<std::size_t>(j - 2)]);
        return Eigen::MatrixXd::Zero(E.rows(), E.cols());
    };

    Eigen::MatrixXd H(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = i; j < d; ++j) {
            const auto& Ai = A[static_cast<std::size_t>(i)];
            const auto& Aj = A[static_cast<std::size_t>(j)];
            const Eigen::MatrixXd Gij = (i == 0 || j == 0) ? Eigen::MatrixXd::Zero(n, n) : second_deriv(i, j);
            const double quad_ij = w.alpha.dot(Gij * w.alpha);
            const double tr_ij = sinv.cwiseProduct(Gij).sum();
            const double cross_quad = Ga[static_cast<std::size_t>(i)].dot(w.llt.solve(Ga[static_cast<std::size_t>(j)]));
            const double cross_tr = Ai.cwiseProduct(Aj.transpose()).sum();
            double h = 0.5 * (s1 * quad_ij - tr_ij) - 0.5 * (s1 * cross_quad - cross_tr) - 0.5 * s1 * cross_quad;
            h += 0.5 * c2 * w.alpha.dot(Ga[static_cast<std::size_t>(i)]) * w.alpha.dot(Ga[static_cast<std::size_t>(j)]);
            H(i, j) = h;
            H(j, i) = h;
        }
    }

    // Chain rule onto log-parameters.
    const Eigen::VectorXd bvec = beta.to_vector();
    Eigen::VectorXd g(d);
    g(0) = 0.5 * (s1 * w.alpha.squaredNorm() - sinv.trace());
    for (Eigen::Index k = 1; k < d; ++k) {
        g(k) = 0.5 * (s1 * w.alpha.dot(Ga[static_cast<std::size_t>(k)]) -
                      sinv.cwiseProduct(G[static_cast<std::size_t>(k)]).sum());
    }
    Eigen::MatrixXd Hlog = bvec.asDiagonal() * H * bvec.asDiagonal();
    Hlog.diagonal() += bvec.cwiseProduct(g);
    return 0.5 * (Hlog + Hlog.transpose());
}

/// Estimation result. Immutable after fit(); the Cholesky factor of
/// Sigma_tilde at beta_hat and alpha = Sigma_tilde^{-1} y are cached for
/// prediction.
struct FittedModel {
    ModelKind kind = ModelKind::ETPR;
    double nu = 1.05;
    double jitter_rel = 1e-8;
    ModelParams beta;

    double loglik = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd grad;  // over log-parameters, at beta_hat
    bool converged = false;
    bool at_bound = false;
    int iterations = 0;
    int failed_starts = 0;

    double S = 0.0;
    double s0 = 1.0;
    double s1 = 1.0;
    Eigen::LLT<Eigen::MatrixXd> chol;
    Eigen::VectorXd alpha;
    Eigen::MatrixXd hessian_log;

    ModelConfig config() const {
        ModelConfig c;
        c.nu = nu;
        c.kind = kind;
        c.jitter_rel = jitter_rel;
        return c;
    }
};

namespace detail {

constexpr double kLogLower = -23.025850929940457;  // log(1e-10)
constexpr double kLogUpper = 23.025850929940457;   // log(1e10)

inline Eigen::VectorXd clamp_log(Eigen::VectorXd b) {
    return b.cwiseMax(kLogLower).cwiseMin(kLogUpper);
}

// Objective of one ascent: the exact heavy-tailed marginal (MarginalML
// branch) or the Gaussian marginal with per-observation noise weights
// (GPR fit and the M-steps of the robust branch; empty weights mean 1).
struct AscentObjective {
    const Dataset& data;
    const ModelConfig& config;
    bool heavy_tailed = false;
    Eigen::VectorXd weights;

    double value(const ModelParams& beta) const {
        const double n = static_cast<double>(data.n());
        const auto w = likelihood_work(data, beta, config, heavy_tailed ? Eigen::VectorXd() : weights);
        if (heavy_tailed) return loglik_from(w, n, config);
        return -0.5 * n * std::log(2.0 * M_PI) - 0.5 * w.logdet - 0.5 * w.S;
    }

    Eigen::VectorXd gradient(const ModelParams& beta) const {
        const Eigen::Index n = data.n();
        const auto w = likelihood_work(data, beta, config, heavy_tailed ? Eigen::VectorXd() : weights);
        const double s1 = heavy_tailed && config.kind == ModelKind::ETPR
                              ? s1_from(w.S, static_cast<double>(n), config.nu)
                              : 1.0;
        const Eigen::MatrixXd sinv = w.llt.solve(Eigen::MatrixXd::Identity(n, n));
        const auto grads = sigma_grads(data, beta);
        Eigen::VectorXd g(beta.dim());
        if (weights.size() == 0 || heavy_tailed) {
            g(0) = 0.5 * (s1 * w.alpha.squaredNorm() - sinv.trace());
        } else {
            const Eigen::VectorXd winv = weights.cwiseInverse();
            g(0) = 0.5 * (w.alpha.cwiseProduct(winv.cwiseSqrt()).squaredNorm() - sinv.diagonal().dot(winv));
        }
        for (std::size_t k = 0; k < grads.size(); ++k) {
            const double quad = w.alpha.dot(grads[k] * w.alpha);
            const double tr = sinv.cwiseProduct(grads[k]).sum();
            g(static_cast<Eigen::Index>(k) + 1) = 0.5 * (s1 * quad - tr);
        }
        return beta.to_vector().asDiagonal() * g;
    }
};

struct AscentResult {
    Eigen::VectorXd b;  // log-parameters
    double loglik = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd grad;
    bool converged = false;
    int iterations = 0;
};

// Gradient ascent over log-parameters with a backtracking line search.
// The initial step reuses a Barzilai-Borwein estimate from the previous
// accepted step; backtracking enforces monotone ascent.
inline AscentResult ascend(const AscentObjective& obj, const Eigen::VectorXd& b0, int max_iters) {
    const Eigen::Index p = obj.data.p();
    const ModelConfig& config = obj.config;
    const auto value = [&](const Eigen::VectorXd& b) -> double {
        try {
            const double v = obj.value(ModelParams::from_vector(b.array().exp(), p));
            return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
        } catch (const std::runtime_error&) {
            return -std::numeric_limits<double>::infinity();
        }
    };

    AscentResult res;
    res.b = clamp_log(b0);
    res.loglik = value(res.b);
    if (!std::isfinite(res.loglik)) return res;
    res.grad = obj.gradient(ModelParams::from_vector(res.b.array().exp(), p));

    double step = 1.0;
    Eigen::VectorXd prev_b, prev_g;
    for (res.iterations = 0; res.iterations < max_iters; ++res.iterations) {
        // Projected gradient: coordinates pinned at the box edge with the
        // gradient pointing outward do not count against convergence.
        Eigen::VectorXd pg = res.grad;
        for (Eigen::Index i = 0; i < pg.size(); ++i) {
            if (res.b(i) <= kLogLower && pg(i) < 0.0) pg(i) = 0.0;
            if (res.b(i) >= kLogUpper && pg(i) > 0.0) pg(i) = 0.0;
        }
        if (pg.lpNorm<Eigen::Infinity>() < config.opt.grad_tol) {
            res.converged = true;
            break;
        }

        if (prev_b.size() > 0) {
            const Eigen::VectorXd sb = res.b - prev_b;
            const Eigen::VectorXd yg = prev_g - res.grad;  // gradient change of -l
            const double sy = sb.dot(yg);
            if (sy > 0.0) step = sb.squaredNorm() / sy;
        }
        step = std::clamp(step, 1e-12, 1e4);

        double t = step;
        double cand_val = -std::numeric_limits<double>::infinity();
        Eigen::VectorXd cand;
        bool accepted = false;
        while (t >= 1e-14) {
            cand = clamp_log(res.b + t * pg);
            cand_val = value(cand);
            const double sufficient = res.loglik + 1e-4 * res.grad.dot(cand - res.b);
            if (std::isfinite(cand_val) && cand_val >= sufficient && cand_val >= res.loglik) {
                accepted = true;
                break;
            }
            t *= config.opt.shrink;
        }
        if (!accepted || (cand - res.b).lpNorm<Eigen::Infinity>() == 0.0) break;

        prev_b = res.b;
        prev_g = res.grad;
        res.b = cand;
        res.loglik = cand_val;
        res.grad = obj.gradient(ModelParams::from_vector(cand.array().exp(), p));
        step = t;
    }
    return res;
}

struct RobustResult {
    AscentResult ascent;
    Eigen::VectorXd weights;
    double objective = -std::numeric_limits<double>::infinity();
    bool weights_converged = false;
};

// Iteratively reweighted estimation for the heavy-tailed fit: alternate a
// weighted Gaussian ascent with the inverse-gamma posterior update of each
// observation's latent noise scale,
//   w_i = E(1/r_i | .) = (2 nu + 1) / (2 omega + q_i),
//   q_i = ((y_i - f_hat_i)^2 + Var(f_i | y)) / phi,
// which reduces to the Gaussian fit as nu grows. Candidate fixed points are
// compared by the weighted marginal plus the scale prior at r = 1/w.
inline RobustResult robust_fit_from(const Dataset& data, const Eigen::VectorXd& b0,
                                    const ModelConfig& config) {
    const Eigen::Index n = data.n();
    const Eigen::Index p = data.p();
    const double nu = config.nu;
    const double om = config.omega();

    RobustResult res;
    res.weights = Eigen::VectorXd::Ones(n);
    AscentObjective obj{data, config, false, res.weights};
    Eigen::VectorXd b = b0;
    AscentResult last;
    for (int pass = 0; pass < config.opt.robust_max_passes; ++pass) {
        obj.weights = res.weights;
        last = ascend(obj, b, config.opt.robust_inner_iters);
        if (!std::isfinite(last.loglik)) {
            res.ascent = last;
            return res;
        }
        b = last.b;
        const ModelParams beta = ModelParams::from_vector(b.array().exp(), p);
        const Eigen::MatrixXd K =
            kernel_matrix(data.X, beta.kernel, config.jitter_rel * beta.kernel.theta0);
        Eigen::MatrixXd st = K;
        st.diagonal() += (beta.phi / res.weights.array()).matrix();
        const auto llt = cholesky_with_jitter(st, config.jitter_rel);
        const Eigen::VectorXd alpha = llt.solve(data.y);
        Eigen::VectorXd next(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::VectorXd ki = K.col(i);
            const double var_f = std::max(0.0, K(i, i) - ki.dot(llt.solve(ki)));
            const double resid = data.y(i) - ki.dot(alpha);
            const double q = (resid * resid + var_f) / beta.phi;
            next(i) = (2.0 * nu + 1.0) / (2.0 * om + q);
        }
        if ((next - res.weights).lpNorm<Eigen::Infinity>() < config.opt.robust_weight_tol) {
            res.weights = next;
            res.weights_converged = true;
            break;
        }
        res.weights = next;
    }
    obj.weights = res.weights;
    last = ascend(obj, b, config.opt.robust_inner_iters);
    res.ascent = last;
    if (!std::isfinite(last.loglik)) return res;

    double prior = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double r = 1.0 / res.weights(i);
        prior += -(nu + 1.0) * std::log(r) - om / r;
    }
    res.objective = last.loglik + prior;
    return res;
}

}  // namespace detail

/// Maximum likelihood fit by multi-start gradient ascent on log(beta).
/// Starts: one moment-based heuristic plus opt.random_starts log-uniform
/// draws; the best final log-likelihood wins. Throws FitError when no start
/// yields a finite likelihood.
inline FittedModel fit(const Dataset& data, const ModelConfig& config) {
    config.validate();
    data.require_consistent();
    if (data.n() < 2) throw FitError("fit: need at least two observations");
    const Eigen::Index p = data.p();
    const Eigen::Index d = 2 + 2 * p;

    std::vector<Eigen::VectorXd> starts;
    {
        const double vy = std::max((data.y.array() - data.y.mean()).square().mean(), 1e-3);
        ModelParams h;
        h.phi = 0.5 * vy;
        h.kernel.theta0 = 0.5 * vy;
        h.kernel.theta1.resize(p);
        h.kernel.theta2.resize(p);
        for (Eigen::Index l = 0; l < p; ++l) {
            const double vx = (data.X.col(l).array() - data.X.col(l).mean()).square().mean();
            h.kernel.theta1(l) = 1.0 / std::clamp(vx, 1e-3, 1e6);
            h.kernel.theta2(l) = 0.1;
        }
        starts.push_back(h.to_vector().array().log());
    }
    Rng start_rng(splitmix64(config.opt.start_seed));
    for (int s = 0; s < config.opt.random_starts; ++s) {
        Eigen::VectorXd b(d);
        for (Eigen::Index i = 0; i < d; ++i)
            b(i) = config.opt.start_log_lo +
                   (config.opt.start_log_hi - config.opt.start_log_lo) * uniform01(start_rng);
        starts.push_back(b);
    }

    detail::AscentResult best;
    int failed = 0;
    int total_iters = 0;
    for (const auto& b0 : starts) {
        auto res = detail::ascend(data, b0, config);
        total_iters += res.iterations;
        if (!std::isfinite(res.loglik)) {
            ++failed;
            continue;
        }
        if (res.loglik > best.loglik) best = std::move(res);
    }
    if (!std::isfinite(best.loglik))
        throw FitError("fit: likelihood non-finite at every start (" + std::to_string(failed) +
                       " starts tried); data may be degenerate");

    FittedModel model;
    model.kind = config.kind;
    model.nu = config.nu;
    model.jitter_rel = config.jitter_rel;
    model.beta = ModelParams::from_vector(best.b.array().exp(), p);
    model.loglik = best.loglik;
    model.grad = best.grad;
    model.converged = best.converged;
    model.iterations = total_iters;
    model.failed_starts = failed;
    model.at_bound = (best.b.array() <= detail::kLogLower).any() || (best.b.array() >= detail::kLogUpper).any();

    const auto w = detail::likelihood_work(data, model.beta, config);
    model.chol = w.llt;
    model.alpha = w.alpha;
    model.S = w.S;
    const double nn = static_cast<double>(data.n());
    model.s0 = config.kind == ModelKind::GPR ? 1.0 : detail::s0_from(w.S, nn, config.nu);
    model.s1 = config.kind == ModelKind::GPR ? 1.0 : detail::s1_from(w.S, nn, config.nu);
    model.hessian_log = hessian(data, model.beta, config);
    return model;
}

/// Model pinned at a given beta without optimization: caches factorization,
/// alpha, s0/s1 and the Hessian so prediction and diagnostics can run at a
/// fixed parameter value.
inline FittedModel model_at(const Dataset& data, const ModelParams& beta, const ModelConfig& config) {
    config.validate();
    data.require_consistent();
    beta.require_positive();
    FittedModel model;
    model.kind = config.kind;
    model.nu = config.nu;
    model.jitter_rel = config.jitter_rel;
    model.beta = beta;
    const auto w = detail::likelihood_work(data, beta, config);
    model.chol = w.llt;
    model.alpha = w.alpha;
    model.S = w.S;
    const double nn = static_cast<double>(data.n());
    model.loglik = detail::loglik_from(w, nn, config);
    model.grad = score(data, beta, config);
    model.s0 = config.kind == ModelKind::GPR ? 1.0 : detail::s0_from(w.S, nn, config.nu);
    model.s1 = config.kind == ModelKind::GPR ? 1.0 : detail::s1_from(w.S, nn, config.nu);
    model.hessian_log = hessian(data, beta, config);
    return model;
}

/// Standard errors of beta_hat from the negative inverse Hessian over
/// log-parameters, delta-method mapped back to the original scale. A
/// numerically singular Hessian flags the result undefined (NaN entries).
struct StdErrors {
    Eigen::VectorXd se;
    bool defined = false;
};

inline StdErrors std_errors(const FittedModel& model) {
    const Eigen::Index d = model.hessian_log.rows();
    StdErrors out;
    out.se = Eigen::VectorXd::Constant(d, std::numeric_limits<double>::quiet_NaN());
    Eigen::FullPivLU<Eigen::MatrixXd> lu(-model.hessian_log);
    if (!lu.isInvertible()) return out;
    const Eigen::MatrixXd cov = lu.inverse();
    if ((cov.diagonal().array() < 0.0).any()) return out;
    out.se = model.beta.to_vector().cwiseProduct(cov.diagonal().cwiseSqrt());
    out.defined = out.se.allFinite();
    return out;
}

}  // namespace etpr

#endif  // ETPR_FIT_HPP
