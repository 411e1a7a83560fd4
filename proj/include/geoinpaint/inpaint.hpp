#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "geoinpaint/autodiff.hpp"
#include "geoinpaint/grid.hpp"
#include "geoinpaint/nn.hpp"

namespace geoinpaint {

/// Point observations of lnK and h. K observations are stored and matched as
/// lnK values, the generator's channel.
struct MeasurementSet {
  GridSpec grid;
  std::vector<std::size_t> k_pixels;  // flat indices j * nx + i
  std::vector<double> k_values;
  std::vector<std::size_t> h_pixels;
  std::vector<double> h_values;
  std::uint64_t seed = 0;

  std::size_t n_k() const noexcept { return k_pixels.size(); }
  std::size_t n_h() const noexcept { return h_pixels.size(); }
  bool empty() const noexcept { return k_pixels.empty() && h_pixels.empty(); }
  Field mask_k() const;
  Field mask_h() const;
  /// Throws LengthMismatch, OutOfRange or InvalidArgument (duplicate pixel).
  void validate() const;
  bool operator==(const MeasurementSet&) const = default;
};

/// Uniform draws without replacement, independent for the two channels, from a
/// physical-unit 4-channel sample. Throws CountExceedsGrid.
MeasurementSet sample_measurements(std::span<const double> truth, const GridSpec& grid, std::size_t n_k,
                                   std::size_t n_h, std::uint64_t seed);

/// L1 mismatch at the observed pixels, per sample of a physical-unit batch
/// [B, 4, ny, nx]; shape [B].
class ContextLoss {
 public:
  explicit ContextLoss(const MeasurementSet& meas);
  ad::Var per_sample(const ad::Var& x) const;

 private:
  GridSpec grid_;
  ad::LinearMapPtr pick_;
  std::vector<double> targets_;
};

double context_loss(std::span<const double> sample, const MeasurementSet& meas);

/// -D(G(z)) per latent row of z [B, z_dim]; shape [B].
ad::Var prior_loss(Critic& critic, LatentGenerator& gen, const ad::Var& z, const ForwardContext& ctx = {});

struct InpaintConfig {
  double lambda_p = 0.1;
  double learning_rate = 1e-2;
  /// Step size reached at the last iteration under geometric decay from
  /// learning_rate. Values <= 0 keep the step size constant.
  double final_learning_rate = 0.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  int max_iterations = 3000;
  int restarts = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RestartResult {
  std::vector<double> z;       // best iterate
  std::vector<double> sample;  // G(z) in physical units
  double loss = 0.0;           // L_c + lambda_p L_p at the best iterate
  double context = 0.0;        // L_c at the best iterate
  int best_iteration = 0;
  bool failed = false;         // a non-finite loss stopped this restart
  std::vector<double> trace;   // L_z per evaluated iterate
};

/// Adam on L_z = L_c + lambda_p L_p for every row of z0 at once. Networks are
/// evaluated in inference mode, so the rows are independent problems and the
/// batch gives the same iterates as separate runs. Iterate 0 is z0 itself;
/// the lowest-loss iterate is returned per row.
std::vector<RestartResult> optimize_z(LatentGenerator& gen, Critic& critic, const ChannelStats& stats,
                                      const MeasurementSet& meas, const InpaintConfig& cfg, const ad::Tensor& z0);

/// Standard-normal initial latents for `cfg.restarts` runs, restart r seeded by
/// (cfg.seed, r).
ad::Tensor initial_latents(const InpaintConfig& cfg, int z_dim);

struct InpaintResult {
  std::vector<double> mean;  // pixelwise mean of successful restarts, physical units
  std::vector<RestartResult> restarts;
  std::size_t failures = 0;
};

InpaintResult inpaint(LatentGenerator& gen, Critic& critic, const ChannelStats& stats, const MeasurementSet& meas,
                      const InpaintConfig& cfg);

}  // namespace geoinpaint
