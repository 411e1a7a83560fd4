#pragma once

#include <Eigen/Dense>

namespace geoinpaint::linalg {

struct EigenPairs {
  Eigen::VectorXd values;   // nonincreasing
  Eigen::MatrixXd vectors;  // one column per value; empty when not requested
};

/// Largest `k` eigenpairs of the symmetric matrix `a` (only its upper triangle
/// is read). The matrix is consumed as workspace. Throws ConvergenceFailure if
/// LAPACK reports a failure.
EigenPairs top_eigenpairs(Eigen::MatrixXd a, int k, bool with_vectors = true);

/// Flips each column so that its largest-magnitude entry is positive (first
/// such entry on ties).
void fix_signs(Eigen::MatrixXd& vectors);

}  // namespace geoinpaint::linalg
