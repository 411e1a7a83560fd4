#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "geoinpaint/discrete_ops.hpp"
#include "geoinpaint/nn.hpp"

namespace geoinpaint {

struct TrainConfig {
  double gp_lambda = 10.0;
  double lambda_r = 1.0;
  double lambda_b = 10.0;
  int d_steps_per_g = 5;
  int batch_size = 32;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  int total_g_iterations = 20000;
  std::uint64_t seed = 1;

  void validate() const;
  AdamConfig adam() const { return AdamConfig{learning_rate, adam_beta1, adam_beta2, 1e-8}; }
  bool operator==(const TrainConfig&) const = default;
};

/// Mean over samples of (|grad_x D(x_hat)|_2 - 1)^2 at x_hat = eps real +
/// (1 - eps) fake, one eps per sample. The result stays differentiable with
/// respect to the critic's parameters.
ad::Var gradient_penalty(Critic& critic, const ad::Var& real, const ad::Var& fake, std::span<const double> eps,
                         const ForwardContext& ctx);

/// Per-sample input-gradient norms of the critic, for diagnostics.
std::vector<double> critic_gradient_norms(Critic& critic, const ad::Var& x, const ForwardContext& ctx);

struct DLoss {
  ad::Var total;
  double fake_score = 0.0;  // E[D(G(z))]
  double real_score = 0.0;  // E[D(real)]
  double penalty = 0.0;     // unweighted gradient penalty
};

/// E[D(G(z))] - E[D(real)] + gp_lambda * penalty. The generator output is
/// treated as data (no generator gradients).
DLoss d_loss(Critic& critic, LatentGenerator& gen, const ad::Var& real, const ad::Var& z,
             std::span<const double> eps, double gp_lambda, const ForwardContext& d_ctx,
             const ForwardContext& g_ctx);

struct GLoss {
  ad::Var total;
  double adversarial = 0.0;  // -E[D(G(z))]
  double residual = 0.0;     // L_r of the de-standardized batch
  double boundary = 0.0;     // L_b of the de-standardized batch
};

/// -E[D(G(z))] + lambda_r L_r + lambda_b L_b with the physics terms evaluated
/// on de-standardized generator output. Zero weights skip the physics terms.
GLoss g_loss_physics(Critic& critic, LatentGenerator& gen, const ad::Var& z, const PhysicsLoss& physics,
                     const ChannelStats& stats, double lambda_r, double lambda_b, const ForwardContext& d_ctx,
                     const ForwardContext& g_ctx);

struct IterationLog {
  int iteration = 0;
  double d_loss = 0.0;
  double d_fake = 0.0;
  double d_real = 0.0;
  double gp = 0.0;
  double g_loss = 0.0;
  double g_adversarial = 0.0;
  double residual = 0.0;
  double boundary = 0.0;
};

/// Alternating WGAN-GP optimisation of a generator and critic over a
/// standardized dataset. All randomness flows from one seeded engine, so a run
/// is reproducible from (config, data, seed).
class Trainer {
 public:
  Trainer(const NetworkConfig& net, const TrainConfig& train, const PhysicsLoss& physics, const ChannelStats& stats);

  /// Runs generator iterations until `total_g_iterations` is reached or
  /// `max_new` more have been done. The callback sees every logged iteration.
  void run(const FieldStack& data, int max_new = -1,
           const std::function<void(const IterationLog&)>& on_iteration = {});

  Generator& generator() noexcept { return gen_; }
  Discriminator& discriminator() noexcept { return disc_; }
  const std::vector<IterationLog>& log() const noexcept { return log_; }
  int iteration() const noexcept { return iteration_; }
  const NetworkConfig& network_config() const noexcept { return net_; }
  const TrainConfig& train_config() const noexcept { return cfg_; }
  const ChannelStats& stats() const noexcept { return stats_; }
  Adam& g_optimizer() noexcept { return g_opt_; }
  Adam& d_optimizer() noexcept { return d_opt_; }
  std::mt19937_64& rng() noexcept { return rng_; }
  void set_iteration(int it) noexcept { iteration_ = it; }

 private:
  ad::Var draw_batch(const FieldStack& data);
  ad::Var draw_latent(int batch);

  NetworkConfig net_;
  TrainConfig cfg_;
  const PhysicsLoss* physics_;
  ChannelStats stats_;
  Generator gen_;
  Discriminator disc_;
  Adam g_opt_;
  Adam d_opt_;
  std::mt19937_64 rng_;
  int iteration_ = 0;
  std::vector<IterationLog> log_;
};

/// Standard-normal latent batch [batch, z_dim].
ad::Var sample_latent(int batch, int z_dim, std::mt19937_64& rng);

}  // namespace geoinpaint
