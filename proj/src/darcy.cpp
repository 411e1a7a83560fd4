#include "geoinpaint/darcy.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <string>

#include "geoinpaint/error.hpp"

namespace geoinpaint {

namespace {

void check_conductivity(const Field& k) {
  for (double v : k.values)
    require(v > 0.0 && std::isfinite(v), ErrorCode::NonpositiveConductivity,
            "conductivity must be positive and finite");
}

}  // namespace

void SolverConfig::validate() const {
  require(tolerance > 0.0, ErrorCode::InvalidArgument, "solver tolerance must be positive");
  require(max_iterations >= 1, ErrorCode::InvalidArgument, "max_iterations must be at least 1");
}

LinearSystem assemble(const Field& conductivity, const BoundarySpec& bc, const Field& source) {
  const GridSpec& g = conductivity.grid;
  require(source.grid == g, ErrorCode::GridMismatch, "source and conductivity grids differ");
  check_conductivity(conductivity);

  const int nx = g.nx();
  const int ny = g.ny();
  const double dx = g.dx();
  const double dy = g.dy();
  // Transmissibility factors: face length over centre distance.
  const double tx = dy / dx;
  const double ty = dx / dy;

  LinearSystem sys;
  sys.grid = g;
  sys.has_dirichlet = bc.has_dirichlet();
  sys.rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.size()));
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(g.size() * 5);

  auto k = [&](int i, int j) { return conductivity.at(i, j); };

  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const auto p = static_cast<int>(g.index(i, j));
      double diag = 0.0;
      double b = source.at(i, j) * dx * dy;

      auto interior = [&](int ni, int nj, double factor) {
        const double t = harmonic_mean(k(i, j), k(ni, nj)) * factor;
        diag += t;
        triplets.emplace_back(p, static_cast<int>(g.index(ni, nj)), -t);
      };
      auto boundary = [&](Side side, double factor, double length) {
        const SideCondition& c = bc[side];
        if (c.type == BoundaryType::Dirichlet) {
          const double t = 2.0 * k(i, j) * factor;
          diag += t;
          b += t * c.value;
        } else {
          b -= c.value * length;
        }
      };

      if (i > 0) interior(i - 1, j, tx); else boundary(Side::Left, tx, dy);
      if (i < nx - 1) interior(i + 1, j, tx); else boundary(Side::Right, tx, dy);
      if (j > 0) interior(i, j - 1, ty); else boundary(Side::Bottom, ty, dx);
      if (j < ny - 1) interior(i, j + 1, ty); else boundary(Side::Top, ty, dx);

      triplets.emplace_back(p, p, diag);
      sys.rhs[p] = b;
    }

  sys.matrix.resize(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(g.size()));
  sys.matrix.setFromTriplets(triplets.begin(), triplets.end());
  return sys;
}

Field solve(const LinearSystem& system, const SolverConfig& config) {
  config.validate();
  require(system.has_dirichlet, ErrorCode::SingularSystem,
          "no Dirichlet side: the pure-Neumann system is singular");

  Eigen::VectorXd h;
  if (config.method == SolverMethod::Direct) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(system.matrix);
    require(ldlt.info() == Eigen::Success, ErrorCode::SingularSystem, "LDLT factorisation failed");
    h = ldlt.solve(system.rhs);
  } else {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                             Eigen::DiagonalPreconditioner<double>>
        cg;
    cg.setTolerance(config.tolerance);
    cg.setMaxIterations(config.max_iterations);
    cg.compute(system.matrix);
    h = cg.solve(system.rhs);
    require(cg.info() == Eigen::Success, ErrorCode::NonConvergence,
            "conjugate gradient stopped after " + std::to_string(cg.iterations()) +
                " iterations at relative residual " + std::to_string(cg.error()));
  }

  const double bnorm = system.rhs.norm();
  const double rnorm = (system.matrix * h - system.rhs).norm();
  require(h.allFinite(), ErrorCode::SingularSystem, "solution is not finite");
  if (config.method == SolverMethod::ConjugateGradient && bnorm > 0.0)
    require(rnorm <= 10.0 * config.tolerance * bnorm, ErrorCode::NonConvergence,
            "relative residual " + std::to_string(rnorm / bnorm) + " above tolerance");

  return Field(system.grid, std::vector<double>(h.data(), h.data() + h.size()));
}

FaceFluxes face_fluxes(const Field& conductivity, const Field& head, const BoundarySpec& bc) {
  const GridSpec& g = conductivity.grid;
  require(head.grid == g, ErrorCode::GridMismatch, "head and conductivity grids differ");
  const int nx = g.nx();
  const int ny = g.ny();
  const double dx = g.dx();
  const double dy = g.dy();

  FaceFluxes out;
  out.x_faces.assign(static_cast<std::size_t>(ny) * (nx + 1), 0.0);
  out.y_faces.assign(static_cast<std::size_t>(ny + 1) * nx, 0.0);

  for (int j = 0; j < ny; ++j) {
    double* row = out.x_faces.data() + static_cast<std::size_t>(j) * (nx + 1);
    for (int i = 1; i < nx; ++i)
      row[i] = -harmonic_mean(conductivity.at(i - 1, j), conductivity.at(i, j)) *
               (head.at(i, j) - head.at(i - 1, j)) / dx;
    const SideCondition& left = bc[Side::Left];
    row[0] = left.type == BoundaryType::Dirichlet
                 ? -2.0 * conductivity.at(0, j) * (head.at(0, j) - left.value) / dx
                 : -left.value;
    const SideCondition& right = bc[Side::Right];
    row[nx] = right.type == BoundaryType::Dirichlet
                  ? -2.0 * conductivity.at(nx - 1, j) * (right.value - head.at(nx - 1, j)) / dx
                  : right.value;
  }
  for (int i = 0; i < nx; ++i) {
    auto at = [&](int j) -> double& { return out.y_faces[static_cast<std::size_t>(j) * nx + i]; };
    for (int j = 1; j < ny; ++j)
      at(j) = -harmonic_mean(conductivity.at(i, j - 1), conductivity.at(i, j)) *
              (head.at(i, j) - head.at(i, j - 1)) / dy;
    const SideCondition& bottom = bc[Side::Bottom];
    at(0) = bottom.type == BoundaryType::Dirichlet
                ? -2.0 * conductivity.at(i, 0) * (head.at(i, 0) - bottom.value) / dy
                : -bottom.value;
    const SideCondition& top = bc[Side::Top];
    at(ny) = top.type == BoundaryType::Dirichlet
                 ? -2.0 * conductivity.at(i, ny - 1) * (top.value - head.at(i, ny - 1)) / dy
                 : top.value;
  }
  return out;
}

Field flux_imbalance(const Field& conductivity, const Field& head, const BoundarySpec& bc, const Field& source) {
  const GridSpec& g = conductivity.grid;
  require(source.grid == g, ErrorCode::GridMismatch, "source grid differs");
  const FaceFluxes f = face_fluxes(conductivity, head, bc);
  const int nx = g.nx();
  Field out(g);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < nx; ++i) {
      const double fx_w = f.x_faces[static_cast<std::size_t>(j) * (nx + 1) + i];
      const double fx_e = f.x_faces[static_cast<std::size_t>(j) * (nx + 1) + i + 1];
      const double fy_s = f.y_faces[static_cast<std::size_t>(j) * nx + i];
      const double fy_n = f.y_faces[static_cast<std::size_t>(j + 1) * nx + i];
      out.at(i, j) = (fx_e - fx_w) * g.dy() + (fy_n - fy_s) * g.dx() - source.at(i, j) * g.dx() * g.dy();
    }
  return out;
}

double prescribed_flux_component(Side side, double outward_flux) noexcept {
  return (side == Side::Left || side == Side::Bottom) ? -outward_flux : outward_flux;
}

CellFlux compute_flux(const Field& conductivity, const Field& head, const BoundarySpec& bc) {
  const GridSpec& g = conductivity.grid;
  const FaceFluxes f = face_fluxes(conductivity, head, bc);
  const int nx = g.nx();
  const int ny = g.ny();
  CellFlux out{Field(g), Field(g)};
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      out.f1.at(i, j) = 0.5 * (f.x_faces[static_cast<std::size_t>(j) * (nx + 1) + i] +
                               f.x_faces[static_cast<std::size_t>(j) * (nx + 1) + i + 1]);
      out.f2.at(i, j) = 0.5 * (f.y_faces[static_cast<std::size_t>(j) * nx + i] +
                               f.y_faces[static_cast<std::size_t>(j + 1) * nx + i]);
    }

  auto override_side = [&](Side side) {
    const SideCondition& c = bc[side];
    if (c.type != BoundaryType::Neumann) return;
    const double v = prescribed_flux_component(side, c.value);
    switch (side) {
      case Side::Left: for (int j = 0; j < ny; ++j) out.f1.at(0, j) = v; break;
      case Side::Right: for (int j = 0; j < ny; ++j) out.f1.at(nx - 1, j) = v; break;
      case Side::Bottom: for (int i = 0; i < nx; ++i) out.f2.at(i, 0) = v; break;
      case Side::Top: for (int i = 0; i < nx; ++i) out.f2.at(i, ny - 1) = v; break;
    }
  };
  for (Side s : {Side::Left, Side::Right, Side::Bottom, Side::Top}) override_side(s);
  return out;
}

std::vector<double> solve_sample(const Field& lnk, const BoundarySpec& bc, const Field& source,
                                 const SolverConfig& solver) {
  const GridSpec& g = lnk.grid;
  Field k(g);
  std::transform(lnk.values.begin(), lnk.values.end(), k.values.begin(), [](double v) { return std::exp(v); });
  const Field h = solve(assemble(k, bc, source), solver);
  const CellFlux flux = compute_flux(k, h, bc);

  std::vector<double> sample;
  sample.reserve(kChannels * g.size());
  for (const Field* f : {&lnk, &h, &flux.f1, &flux.f2}) sample.insert(sample.end(), f->values.begin(), f->values.end());
  return sample;
}

std::vector<double> generate_pair(const KLBasis& basis, const CovarianceSpec& cov, const BoundarySpec& bc,
                                  std::span<const double> z, const Field& source, const SolverConfig& solver) {
  return solve_sample(sample_lnk(basis, cov, z), bc, source, solver);
}

std::vector<double> generate_pair(const KLBasis& basis, const CovarianceSpec& cov, const BoundarySpec& bc,
                                  std::span<const double> z, const SolverConfig& solver) {
  return generate_pair(basis, cov, bc, z, Field(basis.grid), solver);
}

}  // namespace geoinpaint
