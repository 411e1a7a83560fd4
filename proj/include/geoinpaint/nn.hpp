#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "geoinpaint/autodiff.hpp"
#include "geoinpaint/grid.hpp"

namespace geoinpaint {

struct ForwardContext {
  bool training = false;
  /// Source for dropout masks; required when training a network with dropout.
  std::mt19937_64* rng = nullptr;
};

/// Anything that maps latent batches [B, z_dim] to 4-channel samples
/// [B, 4, ny, nx] in standardized units.
class LatentGenerator {
 public:
  virtual ~LatentGenerator() = default;
  virtual int z_dim() const = 0;
  virtual ad::Var generate(const ad::Var& z, const ForwardContext& ctx) = 0;
};

/// Scores a batch [B, 4, ny, nx] with one scalar per sample, shape [B].
class Critic {
 public:
  virtual ~Critic() = default;
  virtual ad::Var score(const ad::Var& x, const ForwardContext& ctx) = 0;
};

/// Per-channel affine standardization x_std = (x - mean) / std.
struct ChannelStats {
  std::array<double, kChannels> mean{0.0, 0.0, 0.0, 0.0};
  std::array<double, kChannels> stddev{1.0, 1.0, 1.0, 1.0};

  static ChannelStats identity() { return {}; }
  /// Mean and population standard deviation of every channel; channels with
  /// zero spread keep std 1.
  static ChannelStats from_data(const FieldStack& data);

  void validate() const;
  void standardize(FieldStack& data) const;
  void destandardize(std::span<double> sample) const;
  /// Differentiable inverse transform of [B, 4, ny, nx].
  ad::Var destandardize(const ad::Var& x) const;
  bool operator==(const ChannelStats&) const = default;
};

struct NetworkConfig {
  int nx = 16;
  int ny = 16;
  int z_dim = 32;
  /// Feature-map width unit d.
  int base_channels = 16;
  int kernel_size = 4;
  int stride = 2;
  /// Number of stride-2 stages in each network.
  int layers = 3;
  double dropout_rate = 0.3;
  double leaky_slope = 0.2;
  double bn_momentum = 0.99;
  double bn_eps = 1e-5;

  void validate() const;
  /// Channel count entering the first generator stage: d * 2^(layers - 1).
  int top_channels() const { return base_channels << (layers - 1); }
  bool operator==(const NetworkConfig&) const = default;
};

struct NamedParam {
  std::string name;
  ad::Var var;
};

struct NamedBuffer {
  std::string name;
  std::vector<double>* values;
};

struct Dense {
  ad::Var weight;  // [in, out]
  ad::Var bias;    // [out]
  ad::Var forward(const ad::Var& x) const;
};

struct Conv2d {
  ad::Var weight;  // [co, ci, k, k]
  ad::Var bias;    // [co]
  int stride = 1;
  int pad = 0;
  ad::Var forward(const ad::Var& x) const;
};

struct ConvTranspose2d {
  ad::Var weight;  // [ci, co, k, k], the conv2d weight it is the adjoint of
  ad::Var bias;    // [co]
  int stride = 1;
  int pad = 0;
  int kernel = 1;
  ad::Var forward(const ad::Var& x) const;
};

struct BatchNorm2d {
  ad::Var gamma;
  ad::Var beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.99;
  double eps = 1e-5;
  ad::Var forward(const ad::Var& x, bool training);
};

class Generator final : public LatentGenerator {
 public:
  Generator(const NetworkConfig& cfg, std::uint64_t seed);

  int z_dim() const override { return cfg_.z_dim; }
  ad::Var generate(const ad::Var& z, const ForwardContext& ctx) override;

  const NetworkConfig& config() const noexcept { return cfg_; }
  std::vector<NamedParam> parameters() const;
  std::vector<NamedBuffer> buffers();

 private:
  NetworkConfig cfg_;
  Dense fc_;
  std::vector<BatchNorm2d> norms_;
  std::vector<ConvTranspose2d> ups_;
  ConvTranspose2d out_;
  int h0_ = 0;
  int w0_ = 0;
};

class Discriminator final : public Critic {
 public:
  Discriminator(const NetworkConfig& cfg, std::uint64_t seed);

  ad::Var score(const ad::Var& x, const ForwardContext& ctx) override;

  const NetworkConfig& config() const noexcept { return cfg_; }
  std::vector<NamedParam> parameters() const;

 private:
  NetworkConfig cfg_;
  std::vector<Conv2d> convs_;
  Dense fc_;
};

/// Critic that ignores its input's values: D(x) = c for every sample.
class ConstantCritic final : public Critic {
 public:
  explicit ConstantCritic(double c) : c_(c) {}
  ad::Var score(const ad::Var& x, const ForwardContext& ctx) override;

 private:
  double c_;
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<ad::Var> params, const AdamConfig& cfg);

  /// One update with the given gradients, in parameter order.
  void step(const std::vector<ad::Var>& grads);

  const std::vector<ad::Var>& params() const noexcept { return params_; }
  std::int64_t steps() const noexcept { return t_; }
  std::vector<std::vector<double>>& first_moments() noexcept { return m_; }
  std::vector<std::vector<double>>& second_moments() noexcept { return v_; }
  void set_steps(std::int64_t t) noexcept { t_ = t; }
  double learning_rate() const noexcept { return cfg_.learning_rate; }
  void set_learning_rate(double lr) noexcept { cfg_.learning_rate = lr; }

 private:
  std::vector<ad::Var> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t t_ = 0;
};

std::vector<ad::Var> vars_of(const std::vector<NamedParam>& params);

}  // namespace geoinpaint
