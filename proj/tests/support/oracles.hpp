#pragma once

#include <vector>

#include "geoinpaint/darcy.hpp"
#include "geoinpaint/kl_sampler.hpp"
#include "geoinpaint/nn.hpp"

namespace testsupport {

using namespace geoinpaint;

/// Linear generator: the KL decoder written into the lnK channel, zeros in
/// the other channels. z_dim is the basis truncation.
class KLGenerator final : public LatentGenerator {
 public:
  KLGenerator(const KLBasis& basis, const CovarianceSpec& cov);
  int z_dim() const override { return basis_.truncation(); }
  ad::Var generate(const ad::Var& z, const ForwardContext& ctx) override;

 private:
  KLBasis basis_;
  CovarianceSpec cov_;
  ad::LinearMapPtr decode_;
};

/// Ignores parameters: maps every latent row to the solver sample of the KL
/// field with those coefficients, standardized by `stats`. Not differentiable
/// in z.
class SolverGenerator final : public LatentGenerator {
 public:
  SolverGenerator(const KLBasis& basis, const CovarianceSpec& cov, const BoundarySpec& bc, const ChannelStats& stats);
  int z_dim() const override { return basis_.truncation(); }
  ad::Var generate(const ad::Var& z, const ForwardContext& ctx) override;

 private:
  KLBasis basis_;
  CovarianceSpec cov_;
  BoundarySpec bc_;
  ChannelStats stats_;
};

/// D(x) = <w, x> + b per sample.
class AffineCritic final : public Critic {
 public:
  AffineCritic(std::vector<double> w, double b, const ad::Shape& sample_shape);
  ad::Var score(const ad::Var& x, const ForwardContext& ctx) override;

 private:
  ad::LinearMapPtr map_;
  double b_;
};

/// Sobel derivative oracle written as explicit smoothed central differences on
/// a replicate-padded image: (1,2,1)/4 smoothing across, (f+ - f-)/(2 d) along.
Field smoothed_central_difference(const Field& f, bool along_x);

}  // namespace testsupport
