#ifndef ETPR_IO_HPP
#define ETPR_IO_HPP

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "etpr/dataset.hpp"
#include "etpr/fit.hpp"

namespace etpr {

struct CsvError : std::runtime_error {
    explicit CsvError(const std::string& what) : std::runtime_error(what) {}
};

/// All tabular output carries 17 significant digits so binary64 values
/// round-trip and downstream diffs are exact.
inline std::string num17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct CsvTable {
    std::vector<std::string> header;
    Eigen::MatrixXd values;
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CsvError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw CsvError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    CsvTable table;
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) table.header.push_back(cell);
    if (table.header.empty()) throw CsvError(path + ": missing header row");

    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::vector<double> row;
        while (std::getline(ls, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0')
                throw CsvError(path + ":" + std::to_string(lineno) + ": non-numeric value '" + cell + "'");
            if (!std::isfinite(v))
                throw CsvError(path + ":" + std::to_string(lineno) + ": non-finite value");
            row.push_back(v);
        }
        if (row.size() != table.header.size())
            throw CsvError(path + ":" + std::to_string(lineno) + ": expected " +
                           std::to_string(table.header.size()) + " fields, got " + std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw CsvError(path + ": no data rows");

    table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table.header.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return table;
}

/// Last column is the response, the rest are covariates.
inline Dataset dataset_from_csv(const std::string& path) {
    const CsvTable table = read_csv(path);
    if (table.values.cols() < 2) throw CsvError(path + ": need at least one covariate column and a response");
    Dataset data;
    data.X = table.values.leftCols(table.values.cols() - 1);
    data.y = table.values.rightCols(1);
    data.require_consistent();
    return data;
}

inline void write_csv(std::ostream& out, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << "\n";
    for (const auto& row : rows) {
        for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << num17(row[j]);
        out << "\n";
    }
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    if (!out) throw CsvError("cannot write " + path);
    write_csv(out, header, rows);
}

// ---------------------------------------------------------------------------
// Model files

inline constexpr int kModelSchemaVersion = 1;

inline nlohmann::json model_to_json(const FittedModel& model, const Dataset& train,
                                    const StdErrors& errors) {
    nlohmann::json j;
    j["schema_version"] = kModelSchemaVersion;
    j["kind"] = to_string(model.kind);
    j["nu"] = model.nu;
    j["jitter_rel"] = model.jitter_rel;
    j["beta"] = {{"phi", model.beta.phi},
                 {"theta0", model.beta.kernel.theta0},
                 {"theta1", std::vector<double>(model.beta.kernel.theta1.data(),
                                                model.beta.kernel.theta1.data() + model.beta.kernel.theta1.size())},
                 {"theta2", std::vector<double>(model.beta.kernel.theta2.data(),
                                                model.beta.kernel.theta2.data() + model.beta.kernel.theta2.size())}};
    j["s0"] = model.s0;
    j["s1"] = model.s1;
    j["loglik"] = model.loglik;
    j["converged"] = model.converged;
    j["at_bound"] = model.at_bound;
    j["iterations"] = model.iterations;
    j["grad_norm"] = model.grad.lpNorm<Eigen::Infinity>();
    if (errors.defined)
        j["std_errors"] = std::vector<double>(errors.se.data(), errors.se.data() + errors.se.size());
    else
        j["std_errors"] = nullptr;
    std::vector<std::vector<double>> Xrows;
    for (Eigen::Index i = 0; i < train.n(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(train.p()));
        for (Eigen::Index l = 0; l < train.p(); ++l) row[static_cast<std::size_t>(l)] = train.X(i, l);
        Xrows.push_back(std::move(row));
    }
    j["train"] = {{"X", Xrows}, {"y", std::vector<double>(train.y.data(), train.y.data() + train.n())}};
    return j;
}

struct LoadedModel {
    FittedModel model;
    Dataset train;
};

inline LoadedModel model_from_json(const nlohmann::json& j) {
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != kModelSchemaVersion)
        throw std::invalid_argument("model file: unsupported schema version");
    ModelConfig config;
    config.nu = j["nu"].get<double>();
    config.kind = j["kind"].get<std::string>() == "gpr" ? ModelKind::GPR : ModelKind::ETPR;
    config.jitter_rel = j["jitter_rel"].get<double>();

    const auto& jb = j["beta"];
    ModelParams beta;
    beta.phi = jb["phi"].get<double>();
    beta.kernel.theta0 = jb["theta0"].get<double>();
    const auto t1 = jb["theta1"].get<std::vector<double>>();
    const auto t2 = jb["theta2"].get<std::vector<double>>();
    beta.kernel.theta1 = Eigen::Map<const Eigen::VectorXd>(t1.data(), static_cast<Eigen::Index>(t1.size()));
    beta.kernel.theta2 = Eigen::Map<const Eigen::VectorXd>(t2.data(), static_cast<Eigen::Index>(t2.size()));

    LoadedModel out;
    const auto Xrows = j["train"]["X"].get<std::vector<std::vector<double>>>();
    const auto yv = j["train"]["y"].get<std::vector<double>>();
    out.train.X.resize(static_cast<Eigen::Index>(Xrows.size()), static_cast<Eigen::Index>(t1.size()));
    for (std::size_t i = 0; i < Xrows.size(); ++i)
        for (std::size_t l = 0; l < Xrows[i].size(); ++l)
            out.train.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) = Xrows[i][l];
    out.train.y = Eigen::Map<const Eigen::VectorXd>(yv.data(), static_cast<Eigen::Index>(yv.size()));
    out.train.require_consistent();

    out.model = model_at(out.train, beta, config);
    out.model.converged = j.value("converged", false);
    out.model.at_bound = j.value("at_bound", false);
    out.model.iterations = j.value("iterations", 0);
    return out;
}

}  // namespace etpr

#endif  // ETPR_IO_HPP
