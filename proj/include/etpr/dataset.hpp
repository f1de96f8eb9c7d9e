#ifndef ETPR_DATASET_HPP
#define ETPR_DATASET_HPP

#include <Eigen/Dense>
#include <stdexcept>

namespace etpr {

/// Covariate matrix (n x p) with the paired response vector.
struct Dataset {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;

    Eigen::Index n() const { return X.rows(); }
    Eigen::Index p() const { return X.cols(); }

    void require_consistent() const {
        if (X.rows() != y.size())
            throw std::invalid_argument("dataset: covariate rows and response length differ");
        if (X.rows() < 1) throw std::invalid_argument("dataset: empty");
        if (!X.allFinite() || !y.allFinite())
            throw std::invalid_argument("dataset: non-finite entries");
    }
};

}  // namespace etpr

#endif  // ETPR_DATASET_HPP
