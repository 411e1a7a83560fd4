#include "geoinpaint/kl_sampler.hpp"

#include <cmath>
#include <string>

#include "geoinpaint/error.hpp"
#include "geoinpaint/linalg.hpp"

namespace geoinpaint {

void CovarianceSpec::validate() const {
  require(sigma2 > 0.0 && std::isfinite(sigma2), ErrorCode::InvalidArgument, "sigma2 must be positive");
  require(l1 > 0.0 && l2 > 0.0, ErrorCode::InvalidArgument, "correlation lengths must be positive");
  require(std::isfinite(mu), ErrorCode::InvalidArgument, "mu must be finite");
}

double CovarianceSpec::operator()(double dx, double dy) const noexcept {
  const double ax = dx / l1;
  const double ay = dy / l2;
  switch (kernel) {
    case KernelType::SquaredExponential:
      return sigma2 * std::exp(-0.5 * (ax * ax + ay * ay));
    case KernelType::Exponential:
      return sigma2 * std::exp(-std::sqrt(ax * ax + ay * ay));
  }
  return 0.0;
}

Eigen::MatrixXd build_covariance(const GridSpec& grid, const CovarianceSpec& cov, std::size_t cell_cap) {
  cov.validate();
  const std::size_t n = grid.size();
  require(n <= cell_cap, ErrorCode::SizeCapExceeded,
          std::to_string(n) + " cells exceed the dense covariance cap of " + std::to_string(cell_cap));

  // Separations only depend on index offsets, so tabulate the kernel once.
  const int nx = grid.nx();
  const int ny = grid.ny();
  Eigen::MatrixXd table(ny, nx);
  for (int dj = 0; dj < ny; ++dj)
    for (int di = 0; di < nx; ++di) table(dj, di) = cov(di * grid.dx(), dj * grid.dy());

  Eigen::MatrixXd c(n, n);
  for (int jp = 0; jp < ny; ++jp)
    for (int ip = 0; ip < nx; ++ip) {
      const std::size_t p = grid.index(ip, jp);
      for (int jq = 0; jq < ny; ++jq)
        for (int iq = 0; iq < nx; ++iq)
          c(static_cast<Eigen::Index>(grid.index(iq, jq)), static_cast<Eigen::Index>(p)) =
              table(std::abs(jp - jq), std::abs(ip - iq));
    }
  return c;
}

KLBasis eigendecompose(const GridSpec& grid, Eigen::MatrixXd cov_matrix, int m) {
  require(static_cast<std::size_t>(cov_matrix.rows()) == grid.size() && cov_matrix.cols() == cov_matrix.rows(),
          ErrorCode::ShapeMismatch, "covariance matrix does not match grid");
  require(m >= 1 && static_cast<std::size_t>(m) <= grid.size(), ErrorCode::OutOfRange,
          "truncation must lie in [1, nx*ny]");
  KLBasis basis;
  basis.grid = grid;
  basis.trace = cov_matrix.trace();
  auto pairs = linalg::top_eigenpairs(std::move(cov_matrix), m, true);
  basis.eigenvalues = pairs.values.cwiseMax(0.0);
  basis.modes = std::move(pairs.vectors);
  linalg::fix_signs(basis.modes);
  return basis;
}

KLBasis build_kl_basis(const GridSpec& grid, const CovarianceSpec& cov, int m) {
  return eigendecompose(grid, build_covariance(grid, cov), m);
}

double retained_energy(const KLBasis& basis, int k, EnergyDenominator denominator) {
  require(k >= 1 && k <= basis.truncation(), ErrorCode::OutOfRange,
          "k=" + std::to_string(k) + " outside [1, " + std::to_string(basis.truncation()) + "]");
  const double kept = basis.eigenvalues.head(k).sum();
  const double total =
      denominator == EnergyDenominator::FullTrace ? basis.trace : basis.eigenvalues.sum();
  return total > 0.0 ? kept / total : 1.0;
}

Field sample_lnk(const KLBasis& basis, const CovarianceSpec& cov, std::span<const double> z) {
  require(z.size() == static_cast<std::size_t>(basis.truncation()), ErrorCode::LengthMismatch,
          "latent length " + std::to_string(z.size()) + " != truncation " +
              std::to_string(basis.truncation()));
  Eigen::VectorXd coeff(basis.truncation());
  for (int i = 0; i < basis.truncation(); ++i) coeff[i] = std::sqrt(basis.eigenvalues[i]) * z[i];
  Eigen::VectorXd v = basis.modes * coeff;
  Field f(basis.grid);
  for (std::size_t p = 0; p < f.values.size(); ++p) f.values[p] = cov.mu + v[static_cast<Eigen::Index>(p)];
  return f;
}

Eigen::VectorXd truncated_variance(const KLBasis& basis) {
  return basis.modes.cwiseAbs2() * basis.eigenvalues;
}

}  // namespace geoinpaint
