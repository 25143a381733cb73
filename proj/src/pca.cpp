#include "weldwatch/pca.hpp"

#include "weldwatch/error.hpp"

#include <string>

namespace weldwatch {
namespace {

struct Eigenpairs {
    Eigen::VectorXd values;   // descending
    Eigen::MatrixXd vectors;  // matching columns
};

Eigenpairs descending_eigenpairs(const Eigen::MatrixXd& cov) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw DataError("covariance eigendecomposition failed");
    const auto q = cov.rows();
    Eigenpairs out{solver.eigenvalues().reverse(), solver.eigenvectors().rowwise().reverse()};
    // Covariance is PSD; tiny negative eigenvalues are rounding.
    for (Eigen::Index i = 0; i < q; ++i)
        if (out.values(i) < 0.0) out.values(i) = 0.0;
    return out;
}

}  // namespace

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& rows) {
    if (rows.rows() < 2) throw ConfigError("covariance needs at least two rows");
    if (!rows.allFinite()) throw DataError("covariance input contains non-finite values");
    const Eigen::RowVectorXd mean = rows.colwise().mean();
    const Eigen::MatrixXd centered = rows.rowwise() - mean;
    return (centered.transpose() * centered) / static_cast<double>(rows.rows() - 1);
}

Eigen::VectorXd covariance_spectrum(const Eigen::MatrixXd& rows) {
    return descending_eigenpairs(sample_covariance(rows)).values;
}

PcaFit pca_fit(const Eigen::MatrixXd& rows, int r) {
    const auto n = rows.rows();
    const auto q = rows.cols();
    if (n < 2) throw ConfigError("PCA needs at least two rows");
    if (r < 1 || r > std::min<Eigen::Index>(n - 1, q))
        throw ConfigError("PCA component count " + std::to_string(r) + " outside [1, " +
                          std::to_string(std::min<Eigen::Index>(n - 1, q)) + "]");
    const Eigen::MatrixXd cov = sample_covariance(rows);
    const double trace = cov.trace();
    if (!(trace > 0.0)) throw ConfigError("PCA input has zero covariance (all rows identical)");

    const Eigenpairs pairs = descending_eigenpairs(cov);
    PcaFit fit;
    fit.center = rows.colwise().mean().transpose();
    fit.projection = pairs.vectors.leftCols(r);
    for (int c = 0; c < r; ++c) {
        auto col = fit.projection.col(c);
        col.normalize();
        Eigen::Index at = 0;
        col.cwiseAbs().maxCoeff(&at);
        if (col(at) < 0.0) col = -col;
    }
    fit.scores = (rows.rowwise() - fit.center.transpose()) * fit.projection;
    fit.explained_variance = pairs.values.head(r);
    fit.total_variance = trace;
    return fit;
}

}  // namespace weldwatch
