#pragma once

#include <Eigen/Dense>

namespace weldwatch {

// Principal components of a row-per-sample matrix. The rows are centered on
// their column means before the sample covariance (N-1 denominator) is
// decomposed; for already standardized input the center is zero up to
// rounding.
struct PcaFit {
    Eigen::VectorXd center;              // q
    Eigen::MatrixXd projection;          // q x r, orthonormal columns
    Eigen::MatrixXd scores;              // n x r, (rows - center) * projection
    Eigen::VectorXd explained_variance;  // r leading covariance eigenvalues
    double total_variance = 0.0;         // trace of the covariance
};

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& rows);

// All covariance eigenvalues in descending order.
Eigen::VectorXd covariance_spectrum(const Eigen::MatrixXd& rows);

// Columns are unit eigenvectors in descending eigenvalue order; each column is
// signed so that its largest-magnitude entry is positive.
PcaFit pca_fit(const Eigen::MatrixXd& rows, int r);

}  // namespace weldwatch
