#include <cmath>
#include <random>

#include "doctest.h"
#include "geoinpaint/darcy.hpp"
#include "geoinpaint/error.hpp"

using namespace geoinpaint;

namespace {

Field random_lognormal(const KLBasis& basis, const CovarianceSpec& cov, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> z(static_cast<std::size_t>(basis.truncation()));
  for (double& v : z) v = normal(rng);
  Field lnk = sample_lnk(basis, cov, z);
  for (double& v : lnk.values) v = std::exp(v);
  return lnk;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("Laplacian stencil for uniform conductivity") {
  const GridSpec g = make_grid(3, 3, 3.0, 3.0);
  const LinearSystem sys = assemble(Field(g, 1.0), BoundarySpec::left_right_dirichlet(1.0, 0.0), Field(g));
  const auto c = g.index(1, 1);
  CHECK(sys.matrix.coeff(c, c) == 4.0);
  CHECK(sys.matrix.coeff(c, g.index(0, 1)) == -1.0);
  CHECK(sys.matrix.coeff(c, g.index(2, 1)) == -1.0);
  CHECK(sys.matrix.coeff(c, g.index(1, 0)) == -1.0);
  CHECK(sys.matrix.coeff(c, g.index(1, 2)) == -1.0);
  // Left boundary cell: half-cell Dirichlet transmissibility 2K.
  const auto l = g.index(0, 1);
  CHECK(sys.matrix.coeff(l, l) == 5.0);
  CHECK(sys.rhs[l] == 2.0);
}

TEST_CASE("interface conductivity is the harmonic mean") {
  CHECK(harmonic_mean(1.0, 3.0) == 1.5);
  const GridSpec g = make_grid(3, 3, 3.0, 3.0);
  Field k(g, 1.0);
  k.at(1, 1) = 3.0;
  const LinearSystem sys = assemble(k, BoundarySpec::left_right_dirichlet(1.0, 0.0), Field(g));
  CHECK(sys.matrix.coeff(g.index(1, 1), g.index(0, 1)) == -1.5);
}

TEST_CASE("assembly preconditions") {
  const GridSpec g = make_grid(4, 4, 1.0, 1.0);
  Field k(g, 1.0);
  k.at(2, 2) = 0.0;
  CHECK_THROWS_AS(assemble(k, BoundarySpec::left_right_dirichlet(1.0, 0.0), Field(g)), Error);
  CHECK_THROWS_AS(assemble(Field(g, 1.0), BoundarySpec::left_right_dirichlet(1.0, 0.0),
                           Field(make_grid(5, 4, 1.0, 1.0))),
                  Error);
}

TEST_CASE("pure Neumann system is singular") {
  const GridSpec g = make_grid(4, 4, 1.0, 1.0);
  const LinearSystem sys = assemble(Field(g, 1.0), BoundarySpec{}, Field(g));
  try {
    solve(sys);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingularSystem);
  }
}

TEST_CASE("homogeneous medium gives the linear head exactly") {
  for (int n : {3, 16, 64}) {
    const GridSpec g = make_grid(n, n, 2.0, 2.0);
    const BoundarySpec bc = BoundarySpec::left_right_dirichlet(1.0, 0.0);
    const Field k(g, 1.0);
    const LinearSystem sys = assemble(k, bc, Field(g));
    SolverConfig cg;
    cg.method = SolverMethod::ConjugateGradient;
    const Field direct = solve(sys);
    const Field iterative = solve(sys, cg);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const double exact = 1.0 - g.x_center(i) / 2.0;
        CHECK(std::abs(direct.at(i, j) - exact) <= 1e-10);
        CHECK(std::abs(iterative.at(i, j) - exact) <= 1e-8);
      }
    const CellFlux f = compute_flux(k, direct, bc);
    for (std::size_t p = 0; p < g.size(); ++p) {
      CHECK(f.f1.values[p] == doctest::Approx(0.5).epsilon(1e-10));
      CHECK(std::abs(f.f2.values[p]) <= 1e-10);
    }
  }
}

TEST_CASE("two-strip medium matches series resistance") {
  const GridSpec g = make_grid(32, 8, 2.0, 2.0);
  const BoundarySpec bc = BoundarySpec::left_right_dirichlet(1.0, 0.0);
  Field k(g, 1.0);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = g.nx() / 2; i < g.nx(); ++i) k.at(i, j) = 4.0;
  const Field h = solve(assemble(k, bc, Field(g)));
  // Piecewise-linear exact head: slope -0.8 in the K = 1 strip, -0.2 in K = 4.
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const double x = g.x_center(i);
      const double exact = x < 1.0 ? 1.0 - 0.8 * x : 0.2 - 0.2 * (x - 1.0);
      CHECK(std::abs(h.at(i, j) - exact) <= 1e-8);
    }
  const int m = g.nx() / 2;
  const double interface_head = h.at(m - 1, 0) - 0.8 * g.dx() / 2.0;
  CHECK(std::abs(interface_head - 0.2) <= 1e-8);
  const CellFlux f = compute_flux(k, h, bc);
  for (std::size_t p = 0; p < g.size(); ++p) {
    CHECK(std::abs(f.f1.values[p] - 0.8) <= 1e-8);
    CHECK(std::abs(f.f2.values[p]) <= 1e-8);
  }
}

TEST_CASE("outward Neumann flux on the right side") {
  const GridSpec g = make_grid(10, 4, 2.0, 1.0);
  BoundarySpec bc = BoundarySpec::left_right_dirichlet(1.0, 0.0);
  bc[Side::Right] = SideCondition{BoundaryType::Neumann, 0.5};
  const Field k(g, 1.0);
  const Field h = solve(assemble(k, bc, Field(g)));
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) CHECK(std::abs(h.at(i, j) - (1.0 - 0.5 * g.x_center(i))) <= 1e-10);
  const CellFlux f = compute_flux(k, h, bc);
  for (double v : f.f1.values) CHECK(v == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(prescribed_flux_component(Side::Left, 0.5) == -0.5);
  CHECK(prescribed_flux_component(Side::Top, 0.5) == 0.5);
}

TEST_CASE("constant head has zero flux except on Neumann faces") {
  const GridSpec g = make_grid(5, 5, 1.0, 1.0);
  BoundarySpec bc = BoundarySpec::left_right_dirichlet(0.3, 0.3, 0.0, 0.25);
  const CellFlux f = compute_flux(Field(g, 2.0), Field(g, 0.3), bc);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      CHECK(f.f1.at(i, j) == 0.0);
      CHECK(f.f2.at(i, j) == (j == g.ny() - 1 ? 0.25 : 0.0));
    }
}

TEST_CASE("discrete conservation and maximum principle on lognormal media") {
  const GridSpec g = make_grid(16, 16, 2.0, 2.0);
  const CovarianceSpec cov;
  const KLBasis basis = build_kl_basis(g, cov, 64);
  const BoundarySpec bc = BoundarySpec::left_right_dirichlet(1.0, 0.0);
  std::mt19937_64 rng(5);
  for (int s = 0; s < 50; ++s) {
    const Field k = random_lognormal(basis, cov, rng);
    const Field h = solve(assemble(k, bc, Field(g)));
    CHECK(max_abs(flux_imbalance(k, h, bc, Field(g)).values) <= 1e-8);
    for (double v : h.values) {
      CHECK(v >= -1e-10);
      CHECK(v <= 1.0 + 1e-10);
    }
  }
}

TEST_CASE("conservation with a source term") {
  const GridSpec g = make_grid(12, 9, 2.0, 1.5);
  Field q(g);
  q.at(4, 4) = 3.0;
  q.at(8, 2) = -1.0;
  Field k(g, 1.0);
  for (std::size_t p = 0; p < g.size(); ++p) k.values[p] = 1.0 + 0.1 * static_cast<double>(p % 7);
  const BoundarySpec bc = BoundarySpec::left_right_dirichlet(1.0, 0.0, 0.1, -0.2);
  const Field h = solve(assemble(k, bc, q));
  CHECK(max_abs(flux_imbalance(k, h, bc, q).values) <= 1e-8);
}

TEST_CASE("mirroring K about the midline mirrors h and negates F2") {
  const GridSpec g = make_grid(12, 10, 2.0, 2.0);
  const CovarianceSpec cov;
  const KLBasis basis = build_kl_basis(g, cov, 30);
  std::mt19937_64 rng(9);
  const Field k = random_lognormal(basis, cov, rng);
  Field mirrored(g);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) mirrored.at(i, j) = k.at(i, g.ny() - 1 - j);
  const BoundarySpec bc = BoundarySpec::left_right_dirichlet(1.0, 0.0);
  const Field h = solve(assemble(k, bc, Field(g)));
  const Field hm = solve(assemble(mirrored, bc, Field(g)));
  const CellFlux f = compute_flux(k, h, bc);
  const CellFlux fm = compute_flux(mirrored, hm, bc);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const int jm = g.ny() - 1 - j;
      CHECK(hm.at(i, jm) == doctest::Approx(h.at(i, j)).epsilon(1e-12));
      CHECK(fm.f2.at(i, jm) == doctest::Approx(-f.f2.at(i, j)).epsilon(1e-10));
      CHECK(fm.f1.at(i, jm) == doctest::Approx(f.f1.at(i, j)).epsilon(1e-10));
    }
}

TEST_CASE("conjugate gradient reports non-convergence") {
  const GridSpec g = make_grid(32, 32, 2.0, 2.0);
  const LinearSystem sys = assemble(Field(g, 1.0), BoundarySpec::left_right_dirichlet(1.0, 0.0), Field(g));
  SolverConfig cfg;
  cfg.method = SolverMethod::ConjugateGradient;
  cfg.max_iterations = 2;
  try {
    solve(sys, cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonConvergence);
  }
  cfg.tolerance = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("generate_pair at z = 0 is the homogeneous composite") {
  const GridSpec g = make_grid(8, 8, 2.0, 2.0);
  const CovarianceSpec cov;
  const KLBasis basis = build_kl_basis(g, cov, 16);
  const BoundarySpec bc = BoundarySpec::left_right_dirichlet(1.0, 0.0);
  const std::vector<double> s = generate_pair(basis, cov, bc, std::vector<double>(16, 0.0));
  REQUIRE(s.size() == 4 * g.size());
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const std::size_t p = g.index(i, j);
      CHECK(s[p] == 0.0);
      CHECK(std::abs(s[g.size() + p] - (1.0 - g.x_center(i) / 2.0)) <= 1e-10);
      CHECK(s[2 * g.size() + p] == doctest::Approx(0.5).epsilon(1e-10));
      CHECK(std::abs(s[3 * g.size() + p]) <= 1e-10);
    }

  std::vector<double> z(16);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  for (double& v : z) v = normal(rng);
  CHECK(generate_pair(basis, cov, bc, z) == generate_pair(basis, cov, bc, z));
}
