#include "geoinpaint/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "geoinpaint/error.hpp"
#include "geoinpaint/linalg.hpp"

namespace geoinpaint {

namespace {

void check_grids(const Field& u, const Field& v) {
  require(u.grid == v.grid && u.values.size() == v.values.size(), ErrorCode::GridMismatch,
          "metric inputs live on different grids");
}

double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

}  // namespace

double rmse(const Field& u, const Field& v) {
  check_grids(u, v);
  double s = 0.0;
  for (std::size_t p = 0; p < u.values.size(); ++p) s += (u.values[p] - v.values[p]) * (u.values[p] - v.values[p]);
  return std::sqrt(s / static_cast<double>(u.values.size()));
}

double ssim(const Field& u, const Field& v) {
  check_grids(u, v);
  constexpr double c1 = 0.01;
  constexpr double c2 = 0.03;
  const double mu_u = mean_of(u.values);
  const double mu_v = mean_of(v.values);
  double var_u = 0.0;
  double var_v = 0.0;
  double cov = 0.0;
  for (std::size_t p = 0; p < u.values.size(); ++p) {
    const double a = u.values[p] - mu_u;
    const double b = v.values[p] - mu_v;
    var_u += a * a;
    var_v += b * b;
    cov += a * b;
  }
  const double n = static_cast<double>(u.values.size());
  var_u /= n;
  var_v /= n;
  cov /= n;
  return (2.0 * mu_u * mu_v + c1) * (2.0 * cov + c2) / ((mu_u * mu_u + mu_v * mu_v + c1) * (var_u + var_v + c2));
}

double r_squared(const Field& truth, const Field& pred) {
  check_grids(truth, pred);
  const double mu = mean_of(truth.values);
  double sse = 0.0;
  double tss = 0.0;
  for (std::size_t p = 0; p < truth.values.size(); ++p) {
    sse += (truth.values[p] - pred.values[p]) * (truth.values[p] - pred.values[p]);
    tss += (truth.values[p] - mu) * (truth.values[p] - mu);
  }
  require(tss > 0.0, ErrorCode::ConstantTruth, "R^2 is undefined for a constant truth field");
  return 1.0 - sse / tss;
}

std::vector<double> SpectrumReport::cumulative_over(double total) const {
  std::vector<double> out(eigenvalues.size());
  double s = 0.0;
  for (std::size_t i = 0; i < eigenvalues.size(); ++i) {
    s += eigenvalues[i];
    out[i] = total > 0.0 ? s / total : 0.0;
  }
  return out;
}

SpectrumReport dataset_spectrum(const FieldStack& data, Channel channel, int k) {
  const std::size_t n = data.count();
  require(n >= 2, ErrorCode::InsufficientSamples, "a sample covariance needs at least two samples");
  const auto p = static_cast<Eigen::Index>(data.grid().size());
  require(k >= 1 && k <= p, ErrorCode::OutOfRange, "spectrum size must lie in [1, pixels]");

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), p);
  for (std::size_t s = 0; s < n; ++s) {
    const auto c = data.channel(s, channel);
    x.row(static_cast<Eigen::Index>(s)) = Eigen::Map<const Eigen::RowVectorXd>(c.data(), p);
  }
  x.rowwise() -= x.colwise().mean();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(p, p);
  cov.selfadjointView<Eigen::Upper>().rankUpdate(x.transpose(), 1.0 / static_cast<double>(n - 1));

  SpectrumReport report;
  report.trace = cov.diagonal().sum();
  const linalg::EigenPairs pairs = linalg::top_eigenpairs(std::move(cov), k, false);
  report.eigenvalues.resize(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) report.eigenvalues[i] = std::max(0.0, pairs.values[i]);
  report.cumulative = report.cumulative_over(report.trace);
  return report;
}

FieldStack generate_samples(LatentGenerator& gen, const ChannelStats& stats, const GridSpec& grid, int n,
                            std::uint64_t seed, int batch) {
  require(n >= 0 && batch >= 1, ErrorCode::InvalidArgument, "sample count and batch size");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  FieldStack out(grid, 0);
  ad::NoGradGuard guard;
  for (int start = 0; start < n; start += batch) {
    const int b = std::min(batch, n - start);
    ad::Tensor z({b, gen.z_dim()});
    for (double& v : z.data) v = normal(rng);
    const ad::Var x = stats.destandardize(gen.generate(ad::constant(std::move(z)), ForwardContext{}));
    require(x.shape() == ad::Shape({b, kChannels, grid.ny(), grid.nx()}), ErrorCode::ShapeMismatch,
            "generator output does not match the evaluation grid");
    const std::size_t inner = kChannels * grid.size();
    for (int s = 0; s < b; ++s)
      out.push_back(std::span<const double>(x.value().data.data() + static_cast<std::size_t>(s) * inner, inner));
  }
  return out;
}

ConsistencyReport consistency_check(LatentGenerator& gen, const ChannelStats& stats, const GridSpec& grid, int n,
                                    const BoundarySpec& bc, const Field& source, const SolverConfig& solver,
                                    std::uint64_t seed, int batch) {
  const FieldStack samples = generate_samples(gen, stats, grid, n, seed, batch);
  ConsistencyReport report;
  double sum_rmse = 0.0;
  double sum_ssim = 0.0;
  std::size_t ok = 0;
  for (std::size_t s = 0; s < samples.count(); ++s) {
    const Field lnk = samples.field(s, Channel::LnK);
    const Field h_gen = samples.field(s, Channel::Head);
    try {
      const std::vector<double> solved = solve_sample(lnk, bc, source, solver);
      const Field h_ref(grid, std::vector<double>(solved.begin() + static_cast<std::ptrdiff_t>(grid.size()),
                                                  solved.begin() + static_cast<std::ptrdiff_t>(2 * grid.size())));
      report.rmse.push_back(rmse(h_gen, h_ref));
      report.ssim.push_back(ssim(h_gen, h_ref));
      report.failed.push_back(false);
      sum_rmse += report.rmse.back();
      sum_ssim += report.ssim.back();
      ++ok;
    } catch (const Error& e) {
      if (classify(e.code()) != ErrorClass::Numerical) throw;
      report.rmse.push_back(std::nan(""));
      report.ssim.push_back(std::nan(""));
      report.failed.push_back(true);
    }
  }
  if (ok > 0) {
    report.mean_rmse = sum_rmse / static_cast<double>(ok);
    report.mean_ssim = sum_ssim / static_cast<double>(ok);
  }
  return report;
}

}  // namespace geoinpaint
