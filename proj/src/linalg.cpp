#include "geoinpaint/linalg.hpp"

#include <lapacke.h>

#include <string>
#include <vector>

#include "geoinpaint/error.hpp"

namespace geoinpaint::linalg {

EigenPairs top_eigenpairs(Eigen::MatrixXd a, int k, bool with_vectors) {
  const int n = static_cast<int>(a.rows());
  require(a.cols() == n, ErrorCode::ShapeMismatch, "eigendecomposition needs a square matrix");
  require(k >= 1 && k <= n, ErrorCode::OutOfRange,
          "requested " + std::to_string(k) + " eigenpairs of a " + std::to_string(n) + "-matrix");

  int found = 0;
  Eigen::VectorXd w(n);
  Eigen::MatrixXd z;
  if (with_vectors) z.resize(n, k);
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(k));
  const lapack_int info =
      LAPACKE_dsyevr(LAPACK_COL_MAJOR, with_vectors ? 'V' : 'N', 'I', 'U', n, a.data(), n, 0.0, 0.0, n - k + 1,
                     n, 0.0, &found, w.data(), with_vectors ? z.data() : nullptr, n, support.data());
  require(info == 0 && found == k, ErrorCode::ConvergenceFailure,
          "dsyevr returned info=" + std::to_string(info));

  // LAPACK orders ascending; flip to nonincreasing.
  EigenPairs out;
  out.values = w.head(k).reverse();
  if (with_vectors) out.vectors = z.rowwise().reverse();
  return out;
}

void fix_signs(Eigen::MatrixXd& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
      const double v = std::abs(vectors(r, c));
      if (v > best_abs) {
        best_abs = v;
        best = r;
      }
    }
    if (vectors(best, c) < 0.0) vectors.col(c) *= -1.0;
  }
}

}  // namespace geoinpaint::linalg
