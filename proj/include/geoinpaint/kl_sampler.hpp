#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>

#include "geoinpaint/grid.hpp"

namespace geoinpaint {

enum class KernelType {
  /// sigma2 * exp(-(dx^2 / (2 l1^2) + dy^2 / (2 l2^2)))
  SquaredExponential,
  /// sigma2 * exp(-sqrt(dx^2 / l1^2 + dy^2 / l2^2))
  Exponential,
};

/// Gaussian-process prior of lnK: mean, variance and correlation lengths.
struct CovarianceSpec {
  double mu = 0.0;
  double sigma2 = 1.0;
  double l1 = 0.5;
  double l2 = 0.5;
  KernelType kernel = KernelType::SquaredExponential;

  void validate() const;
  double operator()(double dx, double dy) const noexcept;
};

inline constexpr std::size_t kDefaultCovarianceCellCap = 8192;

/// Dense (nx*ny)^2 covariance between cell centres. Throws SizeCapExceeded for
/// grids with more than `cell_cap` cells.
Eigen::MatrixXd build_covariance(const GridSpec& grid, const CovarianceSpec& cov,
                                 std::size_t cell_cap = kDefaultCovarianceCellCap);

/// Truncated discrete Karhunen-Loeve basis of a pixel covariance matrix.
struct KLBasis {
  GridSpec grid;
  Eigen::VectorXd eigenvalues;  // nonincreasing, clamped at zero
  Eigen::MatrixXd modes;        // (nx*ny) x m, orthonormal columns
  double trace = 0.0;           // trace of the full covariance matrix

  int truncation() const noexcept { return static_cast<int>(eigenvalues.size()); }
};

/// Top-m eigenpairs of `cov_matrix`; eigenvector signs are fixed so the
/// largest-magnitude entry is positive.
KLBasis eigendecompose(const GridSpec& grid, Eigen::MatrixXd cov_matrix, int m);

/// Convenience: build_covariance followed by eigendecompose.
KLBasis build_kl_basis(const GridSpec& grid, const CovarianceSpec& cov, int m);

enum class EnergyDenominator { FullTrace, TruncatedTotal };

/// Sum of the first k eigenvalues over the full trace or over the retained
/// m-term total. Throws OutOfRange unless 1 <= k <= m.
double retained_energy(const KLBasis& basis, int k, EnergyDenominator denominator);

/// mu + sum_i sqrt(lambda_i) phi_i z_i. Throws LengthMismatch if z.size() != m.
Field sample_lnk(const KLBasis& basis, const CovarianceSpec& cov, std::span<const double> z);

/// Pointwise variance of the truncated expansion, sum_i lambda_i phi_i(p)^2.
Eigen::VectorXd truncated_variance(const KLBasis& basis);

}  // namespace geoinpaint
