#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "geoinpaint/darcy.hpp"
#include "geoinpaint/grid.hpp"
#include "geoinpaint/nn.hpp"

namespace geoinpaint {

double rmse(const Field& u, const Field& v);

/// Whole-image SSIM with C1 = 0.01, C2 = 0.03 and population moments.
double ssim(const Field& u, const Field& v);

/// 1 - SSE / TSS. Throws ConstantTruth when the truth has no spread.
double r_squared(const Field& truth, const Field& pred);

struct SpectrumReport {
  std::vector<double> eigenvalues;  // top-k, nonincreasing, clamped at 0
  double trace = 0.0;               // trace of the sample covariance
  /// Cumulative eigenvalue sums over `trace`.
  std::vector<double> cumulative;
  std::optional<std::vector<double>> reference;

  /// Cumulative sums over an arbitrary total, e.g. a prior's truncated energy.
  std::vector<double> cumulative_over(double total) const;
};

/// Top-k spectrum of the sample covariance (divisor n - 1) of one channel.
/// Throws InsufficientSamples below two samples.
SpectrumReport dataset_spectrum(const FieldStack& data, Channel channel, int k);

struct ConsistencyReport {
  std::vector<double> rmse;
  std::vector<double> ssim;
  std::vector<bool> failed;  // the solver rejected the generated lnK
  double mean_rmse = 0.0;
  double mean_ssim = 0.0;
};

/// Compares the generated h channel of `n` samples with the solver's h for the
/// generated lnK. Generation runs in inference mode in batches of `batch`.
ConsistencyReport consistency_check(LatentGenerator& gen, const ChannelStats& stats, const GridSpec& grid, int n,
                                    const BoundarySpec& bc, const Field& source, const SolverConfig& solver,
                                    std::uint64_t seed, int batch = 100);

/// Physical-unit samples G(z) for `n` standard-normal latents.
FieldStack generate_samples(LatentGenerator& gen, const ChannelStats& stats, const GridSpec& grid, int n,
                            std::uint64_t seed, int batch = 100);

}  // namespace geoinpaint
