#include "geoinpaint/wgan.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "geoinpaint/error.hpp"

namespace geoinpaint {

void TrainConfig::validate() const {
  require(gp_lambda >= 0.0 && lambda_r >= 0.0 && lambda_b >= 0.0, ErrorCode::Config, "loss weights must be >= 0");
  require(d_steps_per_g >= 1, ErrorCode::Config, "d_steps_per_g must be at least 1");
  require(batch_size >= 2, ErrorCode::Config, "batch_size must be at least 2");
  require(learning_rate > 0.0, ErrorCode::Config, "learning_rate must be positive");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0, ErrorCode::Config,
          "Adam betas must lie in [0, 1)");
  require(total_g_iterations >= 0, ErrorCode::Config, "total_g_iterations must be >= 0");
}

ad::Var sample_latent(int batch, int z_dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  ad::Tensor z({batch, z_dim});
  for (double& v : z.data) v = normal(rng);
  return ad::constant(std::move(z));
}

namespace {

// Critic input gradient at x, kept differentiable when create_graph is set.
ad::Var input_gradient(Critic& critic, const ad::Tensor& x, const ForwardContext& ctx, bool create_graph) {
  require(ad::grad_enabled(), ErrorCode::InvalidArgument, "critic input gradients need grad mode enabled");
  const ad::Var leaf(x, true);
  const ad::Var score = critic.score(leaf, ctx);
  return ad::grad(ad::sum(score), {leaf}, create_graph)[0];
}

void check_finite(double v, const char* what, int iteration) {
  if (!std::isfinite(v)) {
    std::ostringstream msg;
    msg << what << " became non-finite at generator iteration " << iteration;
    fail(ErrorCode::Divergence, msg.str());
  }
}

}  // namespace

ad::Var gradient_penalty(Critic& critic, const ad::Var& real, const ad::Var& fake, std::span<const double> eps,
                         const ForwardContext& ctx) {
  require(real.shape() == fake.shape(), ErrorCode::ShapeMismatch,
          "real " + ad::to_string(real.shape()) + " vs fake " + ad::to_string(fake.shape()));
  const int batch = real.shape()[0];
  require(eps.size() == static_cast<std::size_t>(batch), ErrorCode::LengthMismatch, "one eps per sample expected");
  const std::size_t inner = real.size() / static_cast<std::size_t>(batch);

  ad::Tensor x_hat(real.shape());
  for (int b = 0; b < batch; ++b) {
    require(eps[b] >= 0.0 && eps[b] <= 1.0, ErrorCode::OutOfRange, "eps must lie in [0, 1]");
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t k = b * inner + i;
      x_hat.data[k] = eps[b] * real.value().data[k] + (1.0 - eps[b]) * fake.value().data[k];
    }
  }
  const ad::Var g = input_gradient(critic, x_hat, ctx, true);
  const ad::Var norms = ad::safe_sqrt(ad::sample_sum(ad::square(g)));
  return ad::mean(ad::square(ad::add_scalar(norms, -1.0)));
}

std::vector<double> critic_gradient_norms(Critic& critic, const ad::Var& x, const ForwardContext& ctx) {
  const ad::Var g = input_gradient(critic, x.value(), ctx, false);
  const ad::Var n = ad::sample_sum(ad::square(g));
  std::vector<double> out(n.value().data);
  for (double& v : out) v = std::sqrt(v);
  return out;
}

DLoss d_loss(Critic& critic, LatentGenerator& gen, const ad::Var& real, const ad::Var& z,
             std::span<const double> eps, double gp_lambda, const ForwardContext& d_ctx,
             const ForwardContext& g_ctx) {
  ad::Var fake;
  {
    ad::NoGradGuard guard;
    fake = ad::constant(gen.generate(z, g_ctx).value());
  }
  require(fake.shape() == real.shape(), ErrorCode::ShapeMismatch,
          "generator output " + ad::to_string(fake.shape()) + " vs real " + ad::to_string(real.shape()));
  const ad::Var fake_score = ad::mean(critic.score(fake, d_ctx));
  const ad::Var real_score = ad::mean(critic.score(real, d_ctx));
  const ad::Var penalty = gradient_penalty(critic, real, fake, eps, d_ctx);
  DLoss out;
  out.total = ad::add(ad::sub(fake_score, real_score), ad::scale(penalty, gp_lambda));
  out.fake_score = fake_score.item();
  out.real_score = real_score.item();
  out.penalty = penalty.item();
  return out;
}

GLoss g_loss_physics(Critic& critic, LatentGenerator& gen, const ad::Var& z, const PhysicsLoss& physics,
                     const ChannelStats& stats, double lambda_r, double lambda_b, const ForwardContext& d_ctx,
                     const ForwardContext& g_ctx) {
  const ad::Var x = gen.generate(z, g_ctx);
  const ad::Var adversarial = ad::neg(ad::mean(critic.score(x, d_ctx)));
  GLoss out;
  out.total = adversarial;
  out.adversarial = adversarial.item();
  if (lambda_r > 0.0 || lambda_b > 0.0) {
    const ad::Var phys = stats.destandardize(x);
    const ad::Var lr = physics.residual(phys);
    const ad::Var lb = physics.boundary(phys);
    out.residual = lr.item();
    out.boundary = lb.item();
    out.total = ad::add(out.total, ad::add(ad::scale(lr, lambda_r), ad::scale(lb, lambda_b)));
  } else {
    // Still report the physics terms, outside the graph.
    ad::NoGradGuard guard;
    const ad::Var phys = stats.destandardize(ad::constant(x.value()));
    out.residual = physics.residual(phys).item();
    out.boundary = physics.boundary(phys).item();
  }
  return out;
}

Trainer::Trainer(const NetworkConfig& net, const TrainConfig& train, const PhysicsLoss& physics,
                 const ChannelStats& stats)
    : net_(net),
      cfg_(train),
      physics_(&physics),
      stats_(stats),
      gen_(net, train.seed * 4 + 1),
      disc_(net, train.seed * 4 + 2),
      g_opt_(vars_of(gen_.parameters()), train.adam()),
      d_opt_(vars_of(disc_.parameters()), train.adam()),
      rng_(train.seed * 4 + 3) {
  cfg_.validate();
  stats_.validate();
  require(physics.grid().nx() == net.nx && physics.grid().ny() == net.ny, ErrorCode::GridMismatch,
          "physics loss grid differs from the network grid");
}

ad::Var Trainer::draw_batch(const FieldStack& data) {
  const int batch = cfg_.batch_size;
  std::vector<std::size_t> pool(data.count());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  ad::Tensor out({batch, kChannels, net_.ny, net_.nx});
  const std::size_t inner = data.sample_size();
  for (int b = 0; b < batch; ++b) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(b), pool.size() - 1);
    std::swap(pool[b], pool[pick(rng_)]);
    const auto sample = data.sample(pool[b]);
    std::copy(sample.begin(), sample.end(), out.data.begin() + static_cast<std::ptrdiff_t>(b * inner));
  }
  return ad::constant(std::move(out));
}

ad::Var Trainer::draw_latent(int batch) { return sample_latent(batch, net_.z_dim, rng_); }

void Trainer::run(const FieldStack& data, int max_new, const std::function<void(const IterationLog&)>& on_iteration) {
  if (iteration_ >= cfg_.total_g_iterations || max_new == 0) return;
  require(data.grid().nx() == net_.nx && data.grid().ny() == net_.ny, ErrorCode::GridMismatch,
          "dataset grid differs from the network grid");
  require(data.count() >= static_cast<std::size_t>(cfg_.batch_size), ErrorCode::InsufficientSamples,
          "batch_size exceeds the number of training samples");

  const std::vector<ad::Var> d_params = d_opt_.params();
  const std::vector<ad::Var> g_params = g_opt_.params();
  const ForwardContext d_ctx{true, &rng_};
  const ForwardContext g_ctx{true, nullptr};
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  int done = 0;
  while (iteration_ < cfg_.total_g_iterations && (max_new < 0 || done < max_new)) {
    IterationLog entry;
    entry.iteration = iteration_ + 1;
    for (int s = 0; s < cfg_.d_steps_per_g; ++s) {
      const ad::Var real = draw_batch(data);
      const ad::Var z = draw_latent(cfg_.batch_size);
      std::vector<double> eps(static_cast<std::size_t>(cfg_.batch_size));
      for (double& e : eps) e = unit(rng_);
      const DLoss dl = d_loss(disc_, gen_, real, z, eps, cfg_.gp_lambda, d_ctx, g_ctx);
      check_finite(dl.total.item(), "discriminator loss", entry.iteration);
      d_opt_.step(ad::grad(dl.total, d_params));
      entry.d_loss = dl.total.item();
      entry.d_fake = dl.fake_score;
      entry.d_real = dl.real_score;
      entry.gp = dl.penalty;
    }

    const ad::Var z = draw_latent(cfg_.batch_size);
    const GLoss gl =
        g_loss_physics(disc_, gen_, z, *physics_, stats_, cfg_.lambda_r, cfg_.lambda_b, d_ctx, g_ctx);
    check_finite(gl.total.item(), "generator loss", entry.iteration);
    g_opt_.step(ad::grad(gl.total, g_params));
    entry.g_loss = gl.total.item();
    entry.g_adversarial = gl.adversarial;
    entry.residual = gl.residual;
    entry.boundary = gl.boundary;

    ++iteration_;
    ++done;
    log_.push_back(entry);
    if (on_iteration) on_iteration(entry);
  }
}

}  // namespace geoinpaint
