#include <cmath>
#include <random>

#include "doctest.h"
#include "geoinpaint/error.hpp"
#include "geoinpaint/kl_sampler.hpp"
#include "geoinpaint/metrics.hpp"

using namespace geoinpaint;

namespace {

Field random_field(const GridSpec& g, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Field f(g);
  for (double& v : f.values) v = normal(rng);
  return f;
}

double naive_ssim(const Field& u, const Field& v) {
  const double n = static_cast<double>(u.values.size());
  double mu = 0.0, mv = 0.0;
  for (std::size_t p = 0; p < u.values.size(); ++p) {
    mu += u.values[p] / n;
    mv += v.values[p] / n;
  }
  double su = 0.0, sv = 0.0, c = 0.0;
  for (std::size_t p = 0; p < u.values.size(); ++p) {
    su += (u.values[p] - mu) * (u.values[p] - mu) / n;
    sv += (v.values[p] - mv) * (v.values[p] - mv) / n;
    c += (u.values[p] - mu) * (v.values[p] - mv) / n;
  }
  return (2 * mu * mv + 0.01) * (2 * c + 0.03) / ((mu * mu + mv * mv + 0.01) * (su + sv + 0.03));
}

}  // namespace

TEST_CASE("rmse examples and properties") {
  const GridSpec g = make_grid(5, 4, 1.0, 1.0);
  std::mt19937_64 rng(1);
  const Field u = random_field(g, rng), v = random_field(g, rng), w = random_field(g, rng);
  CHECK(rmse(u, u) == 0.0);
  Field shifted = u;
  for (double& x : shifted.values) x += 0.3;
  CHECK(rmse(u, shifted) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(rmse(u, v) == rmse(v, u));
  CHECK(rmse(u, w) <= rmse(u, v) + rmse(v, w) + 1e-15);
  double s = 0.0;
  for (std::size_t p = 0; p < g.size(); ++p) s += (u.values[p] - v.values[p]) * (u.values[p] - v.values[p]);
  CHECK(rmse(u, v) == doctest::Approx(std::sqrt(s / 20.0)).epsilon(1e-14));
  CHECK_THROWS_AS(rmse(u, Field(make_grid(4, 5, 1.0, 1.0))), Error);
}

TEST_CASE("ssim examples and properties") {
  const GridSpec g = make_grid(6, 6, 1.0, 1.0);
  std::mt19937_64 rng(2);
  const Field u = random_field(g, rng), v = random_field(g, rng);
  CHECK(ssim(u, u) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(ssim(Field(g, 1.0), Field(g, 0.0)) == doctest::Approx(0.01 / 1.01).epsilon(1e-14));
  CHECK(ssim(u, v) == doctest::Approx(naive_ssim(u, v)).epsilon(1e-13));
  CHECK(ssim(u, v) == doctest::Approx(ssim(v, u)).epsilon(1e-14));
  CHECK(ssim(u, v) <= 1.0);
}

TEST_CASE("coefficient of determination") {
  const GridSpec g = make_grid(4, 4, 1.0, 1.0);
  std::mt19937_64 rng(3);
  const Field t = random_field(g, rng);
  CHECK(r_squared(t, t) == 1.0);
  double mean = 0.0;
  for (double x : t.values) mean += x / 16.0;
  CHECK(r_squared(t, Field(g, mean)) == doctest::Approx(0.0).epsilon(1e-14));
  const Field p = random_field(g, rng);
  double sse = 0.0, tss = 0.0;
  for (std::size_t k = 0; k < 16; ++k) {
    sse += (t.values[k] - p.values[k]) * (t.values[k] - p.values[k]);
    tss += (t.values[k] - mean) * (t.values[k] - mean);
  }
  CHECK(r_squared(t, p) == doctest::Approx(1.0 - sse / tss).epsilon(1e-13));
  try {
    r_squared(Field(g, 2.0), p);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConstantTruth);
  }
}

TEST_CASE("dataset spectrum basics") {
  const GridSpec g = make_grid(4, 4, 1.0, 1.0);
  FieldStack same(g, 0);
  std::vector<double> s(kChannels * g.size(), 0.5);
  for (int k = 0; k < 5; ++k) same.push_back(s);
  const SpectrumReport flat = dataset_spectrum(same, Channel::LnK, 4);
  for (double v : flat.eigenvalues) CHECK(std::abs(v) <= 1e-14);
  CHECK(flat.trace == 0.0);

  FieldStack one(g, 0);
  one.push_back(s);
  CHECK_THROWS_AS(dataset_spectrum(one, Channel::LnK, 2), Error);
  CHECK_THROWS_AS(dataset_spectrum(same, Channel::LnK, 17), Error);
}

TEST_CASE("dataset spectrum against a direct sample covariance") {
  const GridSpec g = make_grid(3, 3, 1.0, 1.0);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  FieldStack data(g, 0);
  Eigen::MatrixXd x(7, 9);
  for (int n = 0; n < 7; ++n) {
    std::vector<double> s(kChannels * 9);
    for (double& v : s) v = normal(rng);
    for (int p = 0; p < 9; ++p) x(n, p) = s[9 + p];
    data.push_back(s);
  }
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = x.transpose() * x / 6.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const SpectrumReport r = dataset_spectrum(data, Channel::Head, 9);
  CHECK(r.trace == doctest::Approx(cov.trace()).epsilon(1e-12));
  for (int i = 0; i < 9; ++i)
    CHECK(r.eigenvalues[i] == doctest::Approx(std::max(0.0, es.eigenvalues()[8 - i])).epsilon(1e-10));
  CHECK(r.cumulative.back() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("dataset spectrum recovers a KL prior") {
  const GridSpec g = make_grid(8, 8, 2.0, 2.0);
  CovarianceSpec cov;
  const KLBasis basis = build_kl_basis(g, cov, 10);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  FieldStack data(g, 0);
  std::vector<double> z(10), s(kChannels * g.size(), 0.0);
  for (int n = 0; n < 4000; ++n) {
    for (double& v : z) v = normal(rng);
    const Field f = sample_lnk(basis, cov, z);
    std::copy(f.values.begin(), f.values.end(), s.begin());
    data.push_back(s);
  }
  const SpectrumReport r = dataset_spectrum(data, Channel::LnK, 5);
  for (int i = 0; i < 3; ++i) CHECK(r.eigenvalues[i] == doctest::Approx(basis.eigenvalues[i]).epsilon(0.1));
}
