#ifndef ETPR_LOESS_HPP
#define ETPR_LOESS_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "etpr/dataset.hpp"

namespace etpr {

struct LoessConfig {
    double span = 0.75;   // fraction of points in each local window
    int degree = 2;       // 1 or 2 (full quadratic with cross terms)
    int robust_iters = 0; // bisquare re-weighting passes

    void validate() const {
        if (!(span > 0.0 && span <= 1.0)) throw std::invalid_argument("loess: span must be in (0,1]");
        if (degree != 1 && degree != 2) throw std::invalid_argument("loess: degree must be 1 or 2");
        if (robust_iters < 0) throw std::invalid_argument("loess: robust_iters must be nonnegative");
    }
};

namespace loess_detail {

inline Eigen::Index n_terms(Eigen::Index p, int degree) {
    return degree == 1 ? 1 + p : 1 + p + p * (p + 1) / 2;
}

// Polynomial basis in coordinates centered at the query point, so the
// intercept is the fitted value.
inline void fill_row(Eigen::RowVectorXd& row, const Eigen::VectorXd& z, int degree) {
    Eigen::Index c = 0;
    row(c++) = 1.0;
    for (Eigen::Index l = 0; l < z.size(); ++l) row(c++) = z(l);
    if (degree == 2)
        for (Eigen::Index l = 0; l < z.size(); ++l)
            for (Eigen::Index m = l; m < z.size(); ++m) row(c++) = z(l) * z(m);
}

inline double median_abs(std::vector<double> v) {
    for (auto& x : v) x = std::fabs(x);
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double hi = v[mid];
    if (v.size() % 2 == 0) {
        std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid) - 1, v.end());
        return 0.5 * (hi + v[mid - 1]);
    }
    return hi;
}

struct LocalFit {
    double value = 0.0;
    double se = 0.0;  // sigma-free norm of the equivalent weight vector
};

inline LocalFit fit_at(const Dataset& data, const Eigen::VectorXd& u, const LoessConfig& config,
                       const Eigen::VectorXd& robust_w) {
    const Eigen::Index n = data.n();
    const Eigen::Index q = std::min<Eigen::Index>(
        n, static_cast<Eigen::Index>(std::ceil(config.span * static_cast<double>(n))));

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Eigen::VectorXd dist(n);
    for (Eigen::Index i = 0; i < n; ++i) dist(i) = (data.X.row(i).transpose() - u).norm();
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return dist(a) < dist(b); });
    const double dmax = dist(order[static_cast<std::size_t>(q) - 1]);

    const Eigen::Index p = data.p();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(q);
    Eigen::VectorXd yw(q);
    Eigen::MatrixXd Zc(q, p);  // centered covariates of the window
    for (Eigen::Index k = 0; k < q; ++k) {
        const Eigen::Index i = order[static_cast<std::size_t>(k)];
        double tri = 1.0;
        if (dmax > 0.0) {
            const double s = dist(i) / dmax;
            tri = s < 1.0 ? std::pow(1.0 - s * s * s, 3) : 0.0;
        }
        w(k) = tri * robust_w(i);
        yw(k) = data.y(i);
        Zc.row(k) = data.X.row(i) - u.transpose();
    }

    LocalFit out;
    const double wsum = w.sum();
    if (wsum <= 0.0) {  // all window points at the query with zero spread
        double s = 0.0;
        for (Eigen::Index k = 0; k < q; ++k) s += yw(k);
        out.value = s / static_cast<double>(q);
        out.se = 1.0 / std::sqrt(static_cast<double>(q));
        return out;
    }

    // Scale each coordinate by its window spread; keeps the local design
    // well conditioned and leaves the intercept (the fitted value) intact.
    Eigen::VectorXd scale(p);
    for (Eigen::Index l = 0; l < p; ++l)
        scale(l) = std::max(Zc.col(l).cwiseAbs().maxCoeff(), 1e-300);
    const Eigen::MatrixXd Zs = Zc * scale.cwiseInverse().asDiagonal();

    const Eigen::VectorXd sw = w.cwiseSqrt();
    for (int degree = config.degree; degree >= 1; --degree) {
        Eigen::MatrixXd Z(q, n_terms(p, degree));
        Eigen::RowVectorXd row(Z.cols());
        for (Eigen::Index k = 0; k < q; ++k) {
            fill_row(row, Zs.row(k).transpose(), degree);
            Z.row(k) = row;
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sw.asDiagonal() * Z);
        qr.setThreshold(1e-8);
        if (qr.rank() < Z.cols()) continue;  // degenerate window: drop to a simpler fit
        const Eigen::VectorXd coef = qr.solve(sw.cwiseProduct(yw));
        out.value = coef(0);

        // Equivalent weights l(u) with f_hat(u) = l(u)' y give ||l(u)|| for
        // an approximate +/- z sigma_hat ||l|| band.
        const Eigen::MatrixXd M = Z.transpose() * w.asDiagonal() * Z;
        const Eigen::VectorXd e1 = Eigen::VectorXd::Unit(Z.cols(), 0);
        const Eigen::VectorXd x = M.ldlt().solve(e1);
        out.se = (w.asDiagonal() * (Z * x)).norm();
        return out;
    }
    out.value = w.dot(yw) / wsum;  // weighted-mean fallback
    out.se = w.norm() / wsum;
    return out;
}

}  // namespace loess_detail

struct LoessResult {
    Eigen::VectorXd fitted;    // at the query points
    Eigen::VectorXd se_scale;  // ||l(u)||; multiply by sigma_hat for a band
    double sigma_hat = 0.0;    // residual scale from the training fit
    Eigen::VectorXd robust_weights;
};

/// Local polynomial regression: tri-cube weights over the ceil(span n)
/// nearest training points, weighted polynomial fit evaluated at each query
/// row, optional bisquare robustness passes.
inline LoessResult loess_fit(const Dataset& data, const Eigen::MatrixXd& U, const LoessConfig& config) {
    config.validate();
    data.require_consistent();
    if (U.cols() != data.p()) throw std::invalid_argument("loess: query dimension mismatch");
    const Eigen::Index n = data.n();
    if (config.span * static_cast<double>(n) < config.degree + 1)
        throw std::invalid_argument("loess: span * n below degree + 1");

    Eigen::VectorXd rw = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd resid(n);
    for (int pass = 0; pass <= config.robust_iters; ++pass) {
        for (Eigen::Index i = 0; i < n; ++i)
            resid(i) = data.y(i) - loess_detail::fit_at(data, data.X.row(i).transpose(), config, rw).value;
        if (pass == config.robust_iters) break;
        std::vector<double> r(resid.data(), resid.data() + n);
        const double s = loess_detail::median_abs(std::move(r));
        if (s <= 0.0) break;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double t = resid(i) / (6.0 * s);
            rw(i) = std::fabs(t) < 1.0 ? (1.0 - t * t) * (1.0 - t * t) : 0.0;
        }
    }

    LoessResult out;
    out.robust_weights = rw;
    const Eigen::Index dof = std::max<Eigen::Index>(1, n - loess_detail::n_terms(data.p(), config.degree));
    out.sigma_hat = std::sqrt(resid.squaredNorm() / static_cast<double>(dof));
    out.fitted.resize(U.rows());
    out.se_scale.resize(U.rows());
    for (Eigen::Index j = 0; j < U.rows(); ++j) {
        const auto fit = loess_detail::fit_at(data, U.row(j).transpose(), config, rw);
        out.fitted(j) = fit.value;
        out.se_scale(j) = fit.se;
    }
    return out;
}

inline Eigen::VectorXd loess_fit_predict(const Dataset& data, const Eigen::MatrixXd& U,
                                         const LoessConfig& config) {
    return loess_fit(data, U, config).fitted;
}

}  // namespace etpr

#endif  // ETPR_LOESS_HPP
