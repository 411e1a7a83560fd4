#pragma once

#include <Eigen/Sparse>
#include <span>
#include <vector>

#include "geoinpaint/grid.hpp"
#include "geoinpaint/kl_sampler.hpp"

namespace geoinpaint {

/// Finite-volume discretisation of div(K grad h) + q = 0, written as the
/// symmetric positive (semi-)definite system A h = b with one unknown per cell.
struct LinearSystem {
  GridSpec grid;
  Eigen::SparseMatrix<double> matrix;
  Eigen::VectorXd rhs;
  bool has_dirichlet = false;
};

enum class SolverMethod { Direct, ConjugateGradient };

struct SolverConfig {
  SolverMethod method = SolverMethod::Direct;
  double tolerance = 1e-10;  // relative residual bound
  int max_iterations = 10000;

  void validate() const;
};

inline double harmonic_mean(double a, double b) noexcept { return 2.0 * a * b / (a + b); }

/// Interface conductivities are harmonic means of the adjacent cells; Dirichlet
/// faces use the half-cell transmissibility 2K/d; Neumann face fluxes go to the
/// right-hand side. Throws NonpositiveConductivity or GridMismatch.
LinearSystem assemble(const Field& conductivity, const BoundarySpec& bc, const Field& source);

/// Throws SingularSystem when no side is Dirichlet, NonConvergence when CG
/// exhausts its iterations.
Field solve(const LinearSystem& system, const SolverConfig& config = {});

/// Darcy fluxes F = -K grad h on every face, positive along +x / +y.
/// x_faces is ny x (nx + 1), y_faces is (ny + 1) x nx, both row-major.
struct FaceFluxes {
  std::vector<double> x_faces;
  std::vector<double> y_faces;
};

FaceFluxes face_fluxes(const Field& conductivity, const Field& head, const BoundarySpec& bc);

/// Net outflow of every control volume minus its source volume q dx dy.
/// Vanishes (to solver accuracy) for a solved system.
Field flux_imbalance(const Field& conductivity, const Field& head, const BoundarySpec& bc, const Field& source);

struct CellFlux {
  Field f1;
  Field f2;
};

/// Cell-centred flux as the average of the two opposing face fluxes. For
/// uniform K this is -K times the central difference of h; Dirichlet faces use
/// the one-sided half-cell gradient. On Neumann sides the normal component is
/// overwritten with the prescribed value.
CellFlux compute_flux(const Field& conductivity, const Field& head, const BoundarySpec& bc);

/// Signed normal-flux component a Neumann side prescribes (F2 on top/bottom,
/// F1 on left/right; the outward normal of left and bottom points to -x / -y).
double prescribed_flux_component(Side side, double outward_flux) noexcept;

/// One (lnK, h, F1, F2) sample from KL coefficients z with K = exp(lnK).
std::vector<double> generate_pair(const KLBasis& basis, const CovarianceSpec& cov, const BoundarySpec& bc,
                                  std::span<const double> z, const SolverConfig& solver = {});

/// Same, with an explicit source field.
std::vector<double> generate_pair(const KLBasis& basis, const CovarianceSpec& cov, const BoundarySpec& bc,
                                  std::span<const double> z, const Field& source, const SolverConfig& solver);

/// h, F1, F2 for a given lnK field packed as a 4-channel sample.
std::vector<double> solve_sample(const Field& lnk, const BoundarySpec& bc, const Field& source,
                                 const SolverConfig& solver = {});

}  // namespace geoinpaint
