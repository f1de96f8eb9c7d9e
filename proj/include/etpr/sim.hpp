#ifndef ETPR_SIM_HPP
#define ETPR_SIM_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "etpr/dataset.hpp"
#include "etpr/fit.hpp"
#include "etpr/kernel.hpp"
#include "etpr/linalg.hpp"
#include "etpr/loess.hpp"
#include "etpr/predict.hpp"
#include "etpr/rng.hpp"

namespace etpr {

enum class MeanFn { Zero, CosX, Cos2X, H1, H2 };

inline double mean_value(MeanFn fn, const Eigen::VectorXd& x) {
    switch (fn) {
        case MeanFn::Zero: return 0.0;
        case MeanFn::CosX: return std::cos(x(0));
        case MeanFn::Cos2X: return std::cos(2.0 * x(0));
        case MeanFn::H1:
            return 0.5 * x(0) * std::cbrt(std::fabs(x(0))) - 3.0 * std::cos(x(1)) + std::log(x(2));
        case MeanFn::H2: return 0.2 * x(0) * x(0) * x(0) + std::sin(x(1)) + 0.2 * std::exp(x(2));
    }
    return 0.0;
}

inline Eigen::VectorXd mean_values(MeanFn fn, const Eigen::MatrixXd& X) {
    Eigen::VectorXd h(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) h(i) = mean_value(fn, X.row(i).transpose());
    return h;
}

enum class PathKind { GP, ETP };

/// Zero-mean process draw at the rows of X: a Gaussian path with covariance
/// K, or the heavy-tailed variant scaled by one r ~ IG(nu, omega) draw.
inline Eigen::VectorXd sample_path(PathKind kind, const Eigen::MatrixXd& X, const KernelParams& params,
                                   Rng& rng, double nu = 2.0, double omega = 2.0) {
    const Eigen::MatrixXd K = kernel_matrix(X, params, 1e-10 * std::max(params.theta0, 1.0));
    if (K.diagonal().maxCoeff() <= 0.0) return Eigen::VectorXd::Zero(X.rows());
    const auto llt = cholesky_with_jitter(K);
    const double r = kind == PathKind::ETP ? inverse_gamma_draw(rng, nu, omega) : 1.0;
    Eigen::VectorXd xi(X.rows());
    for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = normal01(rng);
    return std::sqrt(r) * (Eigen::MatrixXd(llt.matrixL()) * xi);
}

struct OutlierSpec {
    enum class Placement { None, RandomPoints, LastPoint };
    enum class Noise { GaussianVar, ScaledT2, T1, ConstantShift };
    Placement placement = Placement::None;
    Noise noise = Noise::GaussianVar;
    int count = 0;
    double sigma2 = 0.0;  // Normal(0, sigma2); sqrt(sigma2) scales the t2 draw
    double delta = 0.0;   // constant shift
};

enum class ErrorLaw { Gaussian, ScaledT2, Etp };

/// One generative design from the simulation studies.
struct SimScenario {
    std::string name;
    int case_id = 0;  // 1..5; 0 for the sparse-point designs
    ModelParams beta_true;
    MeanFn mean_fn = MeanFn::Zero;
    PathKind path = PathKind::GP;
    double etp_nu = 2.0, etp_omega = 2.0;  // used when path or errors are heavy-tailed
    ErrorLaw errors = ErrorLaw::Gaussian;
    OutlierSpec outliers;

    enum class Design { SparseLayout, RandomSplitGrid } design = Design::RandomSplitGrid;
    int n_train = 10;
    int n_test = 30;
    int grid_points = 40;  // RandomSplitGrid total (= n_train + n_test)
    std::vector<std::pair<double, double>> domain = {{0.0, 3.0}};
};

struct GeneratedData {
    Dataset train;
    Eigen::MatrixXd test_X;
    Eigen::VectorXd test_truth;  // mean function at the test points
};

namespace sim_detail {

// Open-interval grid lo + (hi-lo) k/(m+1), k = 1..m.
inline Eigen::VectorXd open_grid(double lo, double hi, int m) {
    Eigen::VectorXd g(m);
    for (int k = 1; k <= m; ++k) g(k - 1) = lo + (hi - lo) * static_cast<double>(k) / (m + 1.0);
    return g;
}

inline Eigen::VectorXd closed_grid(double lo, double hi, int m) {
    Eigen::VectorXd g(m);
    for (int k = 0; k < m; ++k)
        g(k) = m == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / (m - 1.0);
    return g;
}

inline std::vector<Eigen::Index> shuffled_indices(Eigen::Index n, Rng& rng) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (Eigen::Index i = n - 1; i > 0; --i) {
        const Eigen::Index j = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    return idx;
}

inline Eigen::VectorXd draw_errors(const SimScenario& sc, Eigen::Index n, Rng& rng) {
    const double phi = sc.beta_true.phi;
    Eigen::VectorXd eps(n);
    switch (sc.errors) {
        case ErrorLaw::Gaussian:
            for (Eigen::Index i = 0; i < n; ++i) eps(i) = std::sqrt(phi) * normal01(rng);
            break;
        case ErrorLaw::ScaledT2:
            for (Eigen::Index i = 0; i < n; ++i) eps(i) = phi * student_t_draw(rng, 2.0);
            break;
        case ErrorLaw::Etp: {
            const double r = inverse_gamma_draw(rng, sc.etp_nu, sc.etp_omega);
            for (Eigen::Index i = 0; i < n; ++i) eps(i) = std::sqrt(r * phi) * normal01(rng);
            break;
        }
    }
    return eps;
}

}  // namespace sim_detail

/// Training and held-out test sets for a scenario. SparseLayout reproduces
/// the motivating design (evenly spaced points on [0, 1.5] plus the far
/// point 2.0, tested on an open grid over (0, 2)); RandomSplitGrid draws a
/// random train/test split of evenly spaced design points.
inline GeneratedData generate_dataset(const SimScenario& sc, Rng& rng) {
    GeneratedData out;
    const Eigen::Index p = sc.beta_true.kernel.dim();
    if (sc.domain.size() != static_cast<std::size_t>(p))
        throw std::invalid_argument("scenario: domain entries must match covariate dimension");

    if (sc.design == SimScenario::Design::SparseLayout) {
        if (p != 1) throw std::invalid_argument("scenario: sparse layout is one-dimensional");
        Eigen::VectorXd x(sc.n_train);
        if (sc.n_train == 50) {
            x.head(48) = sim_detail::closed_grid(0.0, 1.5, 48);
            x(48) = 1.8;
            x(49) = 2.0;
        } else {
            x.head(sc.n_train - 1) = sim_detail::closed_grid(0.0, 1.5, sc.n_train - 1);
            x(sc.n_train - 1) = 2.0;
        }
        out.train.X = x;
        out.test_X = sim_detail::open_grid(0.0, 2.0, sc.n_test);
    } else {
        const int total = sc.grid_points;
        if (sc.n_train + sc.n_test != total)
            throw std::invalid_argument("scenario: n_train + n_test must equal grid_points");
        Eigen::MatrixXd G(total, p);
        for (Eigen::Index l = 0; l < p; ++l)
            G.col(l) = sim_detail::open_grid(sc.domain[static_cast<std::size_t>(l)].first,
                                             sc.domain[static_cast<std::size_t>(l)].second, total);
        const auto idx = sim_detail::shuffled_indices(total, rng);
        out.train.X.resize(sc.n_train, p);
        out.test_X.resize(sc.n_test, p);
        for (int i = 0; i < sc.n_train; ++i) out.train.X.row(i) = G.row(idx[static_cast<std::size_t>(i)]);
        for (int i = 0; i < sc.n_test; ++i)
            out.test_X.row(i) = G.row(idx[static_cast<std::size_t>(sc.n_train + i)]);
    }

    const Eigen::VectorXd f =
        mean_values(sc.mean_fn, out.train.X) +
        sample_path(sc.path, out.train.X, sc.beta_true.kernel, rng, sc.etp_nu, sc.etp_omega);
    out.train.y = f + sim_detail::draw_errors(sc, out.train.X.rows(), rng);
    out.test_truth = mean_values(sc.mean_fn, out.test_X);
    return out;
}

/// Adds the scenario's disturbance to the selected training responses.
/// Deterministic given the generator state; a zero constant shift returns
/// the data unchanged.
inline Dataset inject_outliers(const Dataset& train, const OutlierSpec& spec, Rng& rng) {
    Dataset out = train;
    if (spec.placement == OutlierSpec::Placement::None || spec.count <= 0) return out;
    if (spec.count > train.n()) throw std::invalid_argument("outliers: more disturbances than points");

    std::vector<Eigen::Index> targets;
    if (spec.placement == OutlierSpec::Placement::LastPoint) {
        for (int k = 0; k < spec.count; ++k) targets.push_back(train.n() - 1 - k);
    } else {
        auto idx = sim_detail::shuffled_indices(train.n(), rng);
        targets.assign(idx.begin(), idx.begin() + spec.count);
    }
    for (Eigen::Index i : targets) {
        switch (spec.noise) {
            case OutlierSpec::Noise::GaussianVar: out.y(i) += std::sqrt(spec.sigma2) * normal01(rng); break;
            case OutlierSpec::Noise::ScaledT2: out.y(i) += std::sqrt(spec.sigma2) * student_t_draw(rng, 2.0); break;
            case OutlierSpec::Noise::T1: out.y(i) += student_t_draw(rng, 1.0); break;
            case OutlierSpec::Noise::ConstantShift: out.y(i) += spec.delta; break;
        }
    }
    return out;
}

inline double mse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truth) {
    if (predictions.size() != truth.size()) throw std::invalid_argument("mse: length mismatch");
    return (predictions - truth).squaredNorm() / static_cast<double>(predictions.size());
}

struct MethodSet {
    bool loess = true;
    bool gpr = true;
    bool etpr = true;
};

struct ReplicateRecord {
    int replicate = 0;
    std::uint64_t seed = 0;
    std::optional<double> mse_loess, mse_gpr, mse_etpr;
    bool converged_gpr = false, converged_etpr = false;
};

struct MethodSummary {
    int successes = 0;
    int failures = 0;
    double mean_mse = 0.0;
    double sd_mse = 0.0;
};

struct ExperimentResult {
    std::string scenario;
    int reps = 0;
    std::uint64_t master_seed = 0;
    std::vector<ReplicateRecord> records;
    std::optional<MethodSummary> loess, gpr, etpr;
};

namespace sim_detail {

inline MethodSummary summarize(const std::vector<ReplicateRecord>& records,
                               std::optional<double> ReplicateRecord::*field, int reps) {
    MethodSummary s;
    std::vector<double> values;
    for (const auto& r : records)
        if (r.*field) values.push_back(*(r.*field));
    s.successes = static_cast<int>(values.size());
    s.failures = reps - s.successes;
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean_mse = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean_mse) * (v - s.mean_mse);
        s.sd_mse = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

}  // namespace sim_detail

/// Repeated generate/disturb/fit/predict runs. Replicate i derives its own
/// generator from (master_seed, i), so results are independent of execution
/// order and thread count; fit failures are recorded, not fatal.
inline ExperimentResult run_experiment(const SimScenario& sc, const MethodSet& methods, int reps,
                                       std::uint64_t master_seed, const LoessConfig& loess_config = {},
                                       const ModelConfig& base_config = {}, int threads = 0) {
    if (reps < 1) throw std::invalid_argument("run_experiment: reps must be at least 1");
    ExperimentResult result;
    result.scenario = sc.name;
    result.reps = reps;
    result.master_seed = master_seed;
    result.records.resize(static_cast<std::size_t>(reps));

    const auto run_one = [&](int i) {
        ReplicateRecord rec;
        rec.replicate = i;
        rec.seed = splitmix64(master_seed ^ splitmix64(static_cast<std::uint64_t>(i)));
        Rng rng = child_rng(master_seed, static_cast<std::uint64_t>(i));
        const GeneratedData gen = generate_dataset(sc, rng);
        const Dataset train = inject_outliers(gen.train, sc.outliers, rng);

        if (methods.loess) {
            try {
                rec.mse_loess = mse(loess_fit_predict(train, gen.test_X, loess_config), gen.test_truth);
            } catch (const std::exception&) {
            }
        }
        const auto run_gp = [&](ModelKind kind, std::optional<double>& out, bool& conv) {
            ModelConfig config = base_config;
            config.kind = kind;
            try {
                const FittedModel model = fit(train, config);
                conv = model.converged;
                const auto preds = predict_f(model, train, gen.test_X);
                Eigen::VectorXd m(gen.test_X.rows());
                for (Eigen::Index j = 0; j < m.size(); ++j) m(j) = preds[static_cast<std::size_t>(j)].mean;
                out = mse(m, gen.test_truth);
            } catch (const std::exception&) {
            }
        };
        if (methods.gpr) run_gp(ModelKind::GPR, rec.mse_gpr, rec.converged_gpr);
        if (methods.etpr) run_gp(ModelKind::ETPR, rec.mse_etpr, rec.converged_etpr);
        result.records[static_cast<std::size_t>(i)] = rec;
    };

    int nthreads = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    nthreads = std::clamp(nthreads, 1, reps);
    if (nthreads == 1) {
        for (int i = 0; i < reps; ++i) run_one(i);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(nthreads));
        for (int t = 0; t < nthreads; ++t)
            pool.emplace_back([&] {
                for (int i = next.fetch_add(1); i < reps; i = next.fetch_add(1)) run_one(i);
            });
        for (auto& th : pool) th.join();
    }

    if (methods.loess) result.loess = sim_detail::summarize(result.records, &ReplicateRecord::mse_loess, reps);
    if (methods.gpr) result.gpr = sim_detail::summarize(result.records, &ReplicateRecord::mse_gpr, reps);
    if (methods.etpr) result.etpr = sim_detail::summarize(result.records, &ReplicateRecord::mse_etpr, reps);
    return result;
}

// ---------------------------------------------------------------------------
// Scenario catalogue

namespace sim_detail {

inline ModelParams beta_1d(double phi, double t0, double t1, double t2) {
    ModelParams b;
    b.phi = phi;
    b.kernel = KernelParams::constant(1, t0, t1, t2);
    return b;
}

inline ModelParams beta_3d(double phi, double t0, double t2) {
    ModelParams b;
    b.phi = phi;
    b.kernel = KernelParams::constant(3, t0, 10.0, t2);
    return b;
}

inline void apply_case(SimScenario& sc, int case_id, bool multivariate) {
    sc.case_id = case_id;
    switch (case_id) {
        case 1:
            sc.beta_true = multivariate ? beta_3d(0.1, 0.01, 0.01) : beta_1d(0.1, 0.01, 10.0, 0.01);
            sc.errors = ErrorLaw::Gaussian;
            break;
        case 2:
            sc.beta_true = multivariate ? beta_3d(0.2, 0.05, 0.05) : beta_1d(0.2, 0.2, 10.0, 0.1);
            sc.errors = ErrorLaw::Gaussian;
            break;
        case 3:
            sc.beta_true = multivariate ? beta_3d(0.1, 0.01, 0.01) : beta_1d(0.1, 0.01, 10.0, 0.01);
            sc.errors = ErrorLaw::ScaledT2;
            break;
        case 4:
            sc.beta_true = multivariate ? beta_3d(0.2, 0.05, 0.05) : beta_1d(0.2, 0.2, 10.0, 0.1);
            sc.errors = ErrorLaw::ScaledT2;
            break;
        case 5:
            sc.beta_true = multivariate ? beta_3d(0.1, 0.02, 0.02) : beta_1d(0.1, 0.02, 10.0, 0.02);
            sc.errors = ErrorLaw::Etp;
            sc.path = PathKind::ETP;
            sc.etp_nu = 2.0;
            sc.etp_omega = 2.0;
            break;
        default: throw std::invalid_argument("scenario: case id must be 1..5");
    }
    // Cases 1, 2 and 5 carry the extra heavy-tailed disturbances.
    if (case_id == 1 || case_id == 2 || case_id == 5) {
        sc.outliers.placement = OutlierSpec::Placement::RandomPoints;
        sc.outliers.noise = OutlierSpec::Noise::T1;
        sc.outliers.count = multivariate ? 2 : 1;
    }
}

}  // namespace sim_detail

/// The sparse-point design behind the motivating example: beta_true =
/// (phi, theta0, theta11, theta21) = (0.1, 0.05, 10, 0.05), zero truth.
inline SimScenario sparse_design_scenario(int n_train = 10) {
    SimScenario sc;
    sc.name = "fig1";
    sc.design = SimScenario::Design::SparseLayout;
    sc.beta_true = sim_detail::beta_1d(0.1, 0.05, 10.0, 0.05);
    sc.mean_fn = MeanFn::Zero;
    sc.n_train = n_train;
    sc.n_test = 30;
    sc.domain = {{0.0, 2.0}};
    return sc;
}

/// Named scenario lookup. Accepted names:
///   table1-normal-{1,2,3,4}, table1-t-{1,2,3,4}
///   table2-case{1..5}-{cosx,cos2x}, table2-clean-case{1,2}-{cosx,cos2x}
///   table3-case{1..5}-{h1,h2}
///   fig1, fig1-t, fig1-n50, fig1-n50-t, fig3
inline SimScenario scenario_by_name(const std::string& name) {
    const auto starts_with = [&](const std::string& prefix) { return name.rfind(prefix, 0) == 0; };

    if (starts_with("table1-")) {
        const bool tnoise = starts_with("table1-t-");
        const std::string tail = name.substr(tnoise ? 9 : 14);
        if (!tnoise && !starts_with("table1-normal-")) throw std::invalid_argument("unknown scenario: " + name);
        if (tail.size() != 1 || tail[0] < '1' || tail[0] > '4')
            throw std::invalid_argument("unknown scenario: " + name);
        SimScenario sc = sparse_design_scenario(10);
        sc.name = name;
        sc.outliers.placement = OutlierSpec::Placement::LastPoint;
        sc.outliers.count = 1;
        sc.outliers.noise = tnoise ? OutlierSpec::Noise::ScaledT2 : OutlierSpec::Noise::GaussianVar;
        sc.outliers.sigma2 = static_cast<double>(tail[0] - '0');
        return sc;
    }

    if (starts_with("fig1")) {
        const bool n50 = starts_with("fig1-n50");
        const bool tnoise = name == "fig1-t" || name == "fig1-n50-t";
        if (name != "fig1" && name != "fig1-t" && name != "fig1-n50" && name != "fig1-n50-t")
            throw std::invalid_argument("unknown scenario: " + name);
        SimScenario sc = sparse_design_scenario(n50 ? 50 : 10);
        sc.name = name;
        sc.outliers.placement = OutlierSpec::Placement::LastPoint;
        sc.outliers.count = 1;
        sc.outliers.noise = tnoise ? OutlierSpec::Noise::ScaledT2 : OutlierSpec::Noise::GaussianVar;
        sc.outliers.sigma2 = 4.0;
        return sc;
    }

    if (name == "fig3") {
        SimScenario sc = sparse_design_scenario(10);
        sc.name = name;
        sc.outliers.placement = OutlierSpec::Placement::LastPoint;
        sc.outliers.count = 1;
        sc.outliers.noise = OutlierSpec::Noise::ConstantShift;
        sc.outliers.delta = 0.0;  // swept by the figure runner
        return sc;
    }

    if (starts_with("table2-")) {
        const bool clean = starts_with("table2-clean-");
        std::string rest = name.substr(clean ? 13 : 7);
        if (rest.rfind("case", 0) != 0 || rest.size() < 6)
            throw std::invalid_argument("unknown scenario: " + name);
        const int case_id = rest[4] - '0';
        const std::string fn = rest.substr(6);
        SimScenario sc;
        sc.name = name;
        sc.design = SimScenario::Design::RandomSplitGrid;
        sc.grid_points = 40;
        sc.n_train = 10;
        sc.n_test = 30;
        sc.domain = {{0.0, 3.0}};
        if (fn == "cosx") sc.mean_fn = MeanFn::CosX;
        else if (fn == "cos2x") sc.mean_fn = MeanFn::Cos2X;
        else throw std::invalid_argument("unknown scenario: " + name);
        sim_detail::apply_case(sc, case_id, false);
        if (clean) {
            if (case_id != 1 && case_id != 2) throw std::invalid_argument("unknown scenario: " + name);
            sc.outliers = OutlierSpec{};
        }
        return sc;
    }

    if (starts_with("table3-")) {
        std::string rest = name.substr(7);
        if (rest.rfind("case", 0) != 0 || rest.size() < 6)
            throw std::invalid_argument("unknown scenario: " + name);
        const int case_id = rest[4] - '0';
        const std::string fn = rest.substr(6);
        SimScenario sc;
        sc.name = name;
        sc.design = SimScenario::Design::RandomSplitGrid;
        sc.grid_points = 80;
        sc.n_train = 30;
        sc.n_test = 50;
        sc.domain = {{-2.0, 2.0}, {0.0, 3.0}, {1.0, 2.0}};
        if (fn == "h1") sc.mean_fn = MeanFn::H1;
        else if (fn == "h2") sc.mean_fn = MeanFn::H2;
        else throw std::invalid_argument("unknown scenario: " + name);
        sim_detail::apply_case(sc, case_id, true);
        return sc;
    }

    throw std::invalid_argument("unknown scenario: " + name);
}

// ---------------------------------------------------------------------------
// Figure-style curve runners

struct CurvePoint {
    double x = 0.0;
    double mean = 0.0, lo = 0.0, hi = 0.0;
};

struct CurveSet {
    std::vector<CurvePoint> loess, gpr, etpr;
};

/// One seeded draw of the sparse-point design: fitted curves with 95%-style
/// bands over a fine grid. LOESS bands come from the equivalent-weight
/// approximation and are labeled approximate by the caller.
inline CurveSet run_curves(const SimScenario& sc, std::uint64_t seed, const Eigen::VectorXd& grid,
                           double level, const LoessConfig& loess_config = {},
                           const ModelConfig& base_config = {}) {
    Rng rng = child_rng(seed, 0);
    const GeneratedData gen = generate_dataset(sc, rng);
    const Dataset train = inject_outliers(gen.train, sc.outliers, rng);
    const Eigen::MatrixXd U = grid;

    CurveSet out;
    const double z = std::fabs(level - 0.95) < 1e-12 ? 1.96 : detail::normal_quantile(0.5 * (1.0 + level));
    const auto lo_res = loess_fit(train, U, loess_config);
    for (Eigen::Index j = 0; j < grid.size(); ++j) {
        CurvePoint pt;
        pt.x = grid(j);
        pt.mean = lo_res.fitted(j);
        pt.lo = pt.mean - z * lo_res.sigma_hat * lo_res.se_scale(j);
        pt.hi = pt.mean + z * lo_res.sigma_hat * lo_res.se_scale(j);
        out.loess.push_back(pt);
    }
    for (ModelKind kind : {ModelKind::GPR, ModelKind::ETPR}) {
        ModelConfig config = base_config;
        config.kind = kind;
        const FittedModel model = fit(train, config);
        const auto preds = predict_f(model, train, U);
        auto& dst = kind == ModelKind::GPR ? out.gpr : out.etpr;
        for (Eigen::Index j = 0; j < grid.size(); ++j) {
            const auto& pr = preds[static_cast<std::size_t>(j)];
            CurvePoint pt;
            pt.x = grid(j);
            pt.mean = pr.mean;
            const auto band = credible_interval(pr, level, IntervalTarget::F);
            pt.lo = band.first;
            pt.hi = band.second;
            dst.push_back(pt);
        }
    }
    return out;
}

struct ShiftSweepRow {
    double delta = 0.0;
    double x = 0.0;
    double loess = 0.0, gpr = 0.0, etpr = 0.0;  // mean prediction over replicates
};

/// Constant-shift sweep: for each delta, averages each method's prediction
/// at the evaluation points over seeded replicates.
inline std::vector<ShiftSweepRow> run_shift_sweep(const std::vector<double>& deltas,
                                                  const Eigen::VectorXd& eval_points, int reps,
                                                  std::uint64_t master_seed,
                                                  const LoessConfig& loess_config = {},
                                                  const ModelConfig& base_config = {}, int threads = 0) {
    SimScenario sc = scenario_by_name("fig3");
    std::vector<ShiftSweepRow> rows;
    const Eigen::MatrixXd U = eval_points;
    for (double delta : deltas) {
        sc.outliers.delta = delta;
        // Per-replicate slots, reduced in index order afterwards, so the
        // aggregates do not depend on thread scheduling.
        std::vector<std::array<std::optional<Eigen::VectorXd>, 3>> slots(static_cast<std::size_t>(reps));

        const auto run_one = [&](int i) {
            Rng rng = child_rng(master_seed, static_cast<std::uint64_t>(i));
            const GeneratedData gen = generate_dataset(sc, rng);
            const Dataset train = inject_outliers(gen.train, sc.outliers, rng);
            auto& slot = slots[static_cast<std::size_t>(i)];
            try {
                slot[0] = loess_fit_predict(train, U, loess_config);
            } catch (const std::exception&) {
            }
            int s = 1;
            for (ModelKind kind : {ModelKind::GPR, ModelKind::ETPR}) {
                ModelConfig config = base_config;
                config.kind = kind;
                try {
                    const FittedModel model = fit(train, config);
                    const auto preds = predict_f(model, train, U);
                    Eigen::VectorXd m(U.rows());
                    for (Eigen::Index j = 0; j < m.size(); ++j) m(j) = preds[static_cast<std::size_t>(j)].mean;
                    slot[static_cast<std::size_t>(s)] = m;
                } catch (const std::exception&) {
                }
                ++s;
            }
        };

        int nthreads = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
        nthreads = std::clamp(nthreads, 1, reps);
        if (nthreads == 1) {
            for (int i = 0; i < reps; ++i) run_one(i);
        } else {
            std::atomic<int> next{0};
            std::vector<std::thread> pool;
            for (int t = 0; t < nthreads; ++t)
                pool.emplace_back([&] {
                    for (int i = next.fetch_add(1); i < reps; i = next.fetch_add(1)) run_one(i);
                });
            for (auto& th : pool) th.join();
        }

        std::array<Eigen::VectorXd, 3> sums;
        sums.fill(Eigen::VectorXd::Zero(eval_points.size()));
        std::array<int, 3> counts{0, 0, 0};
        for (const auto& slot : slots)
            for (int s = 0; s < 3; ++s)
                if (slot[static_cast<std::size_t>(s)]) {
                    sums[static_cast<std::size_t>(s)] += *slot[static_cast<std::size_t>(s)];
                    ++counts[static_cast<std::size_t>(s)];
                }

        for (Eigen::Index j = 0; j < eval_points.size(); ++j) {
            ShiftSweepRow row;
            row.delta = delta;
            row.x = eval_points(j);
            row.loess = counts[0] > 0 ? sums[0](j) / counts[0] : 0.0;
            row.gpr = counts[1] > 0 ? sums[1](j) / counts[1] : 0.0;
            row.etpr = counts[2] > 0 ? sums[2](j) / counts[2] : 0.0;
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace etpr

#endif  // ETPR_SIM_HPP
