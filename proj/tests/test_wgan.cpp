#include <cmath>
#include <random>

#include "doctest.h"
#include "geoinpaint/error.hpp"
#include "geoinpaint/wgan.hpp"
#include "support/fd.hpp"
#include "support/oracles.hpp"

using namespace geoinpaint;

namespace {

NetworkConfig tiny_net(int n, int layers) {
  NetworkConfig cfg;
  cfg.nx = n;
  cfg.ny = n;
  cfg.z_dim = 3;
  cfg.base_channels = 2;
  cfg.layers = layers;
  return cfg;
}

ad::Tensor random_tensor(const ad::Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal;
  ad::Tensor t(shape);
  for (double& v : t.data) v = scale * normal(rng);
  return t;
}

std::vector<double> flatten(const std::vector<ad::Var>& vars) {
  std::vector<double> out;
  for (const ad::Var& v : vars) out.insert(out.end(), v.value().data.begin(), v.value().data.end());
  return out;
}

void scatter(std::vector<ad::Var>& vars, const std::vector<double>& flat) {
  std::size_t k = 0;
  for (ad::Var& v : vars)
    for (double& x : v.mutable_value().data) x = flat[k++];
}

// Finite differences of f over every parameter entry, writing through the Vars.
std::vector<double> param_fd(std::vector<ad::Var> params, const std::function<double()>& f) {
  std::vector<double> flat = flatten(params);
  return testsupport::fd_gradient(
      [&]() {
        scatter(params, flat);
        return f();
      },
      flat);
}

FieldStack random_dataset(const GridSpec& g, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  FieldStack data(g, 0);
  std::vector<double> s(kChannels * g.size());
  for (std::size_t k = 0; k < n; ++k) {
    for (double& v : s) v = normal(rng);
    data.push_back(s);
  }
  return data;
}

}  // namespace

TEST_CASE("train config defaults and validation") {
  const TrainConfig cfg;
  CHECK(cfg.gp_lambda == 10.0);
  CHECK(cfg.d_steps_per_g == 5);
  CHECK(cfg.batch_size == 32);
  CHECK(cfg.learning_rate == 1e-4);
  CHECK(cfg.adam_beta1 == 0.5);
  CHECK(cfg.adam_beta2 == 0.9);
  CHECK(cfg.total_g_iterations == 20000);
  TrainConfig bad = cfg;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.lambda_r = -1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("network config validation") {
  NetworkConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.top_channels() == 64);
  cfg.dropout_rate = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  NetworkConfig odd;
  odd.nx = 20;
  CHECK_THROWS_AS(Generator(odd, 1), Error);
}

TEST_CASE("channel statistics round trip") {
  const GridSpec g = make_grid(4, 4, 1.0, 1.0);
  FieldStack data = random_dataset(g, 6, 3);
  for (std::size_t s = 0; s < data.count(); ++s) {
    auto c = data.channel(s, Channel::FluxY);
    std::fill(c.begin(), c.end(), 2.5);
  }
  const FieldStack original = data;
  const ChannelStats stats = ChannelStats::from_data(data);
  CHECK(stats.stddev[3] == 1.0);
  CHECK(stats.mean[3] == doctest::Approx(2.5));
  stats.standardize(data);
  const ChannelStats after = ChannelStats::from_data(data);
  for (int c = 0; c < 3; ++c) {
    CHECK(std::abs(after.mean[c]) <= 1e-12);
    CHECK(after.stddev[c] == doctest::Approx(1.0).epsilon(1e-12));
  }
  for (std::size_t s = 0; s < data.count(); ++s) {
    std::vector<double> x(data.sample(s).begin(), data.sample(s).end());
    stats.destandardize(x);
    for (std::size_t k = 0; k < x.size(); ++k) CHECK(x[k] == doctest::Approx(original.sample(s)[k]).epsilon(1e-12));
  }
}

TEST_CASE("generator output shape, determinism and latent sensitivity") {
  Generator gen(NetworkConfig{}, 7);
  std::mt19937_64 rng(1);
  const ad::Var z = sample_latent(3, 32, rng);
  ad::NoGradGuard guard;
  const ad::Var a = gen.generate(z, ForwardContext{});
  CHECK(a.shape() == ad::Shape{3, 4, 16, 16});
  const ad::Var b = gen.generate(z, ForwardContext{});
  CHECK(a.value().data == b.value().data);

  ad::Tensor other = z.value();
  other.data[0] += 1.0;
  const ad::Var c = gen.generate(ad::constant(other), ForwardContext{});
  double diff = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) diff = std::max(diff, std::abs(c.value().data[k] - a.value().data[k]));
  CHECK(diff > 0.0);

  Generator same(NetworkConfig{}, 7);
  CHECK(same.generate(z, ForwardContext{}).value().data == a.value().data);
  CHECK_THROWS_AS(gen.generate(sample_latent(2, 31, rng), ForwardContext{}), Error);
}

TEST_CASE("training-mode batch norm updates the running statistics") {
  Generator gen(tiny_net(8, 2), 2);
  std::mt19937_64 rng(4);
  const std::vector<double> before = *gen.buffers()[0].values;
  gen.generate(sample_latent(4, 3, rng), ForwardContext{true, nullptr});
  CHECK(*gen.buffers()[0].values != before);
}

TEST_CASE("discriminator scores and zero parameters") {
  Discriminator disc(NetworkConfig{}, 9);
  std::mt19937_64 rng(2);
  const ad::Var x = ad::constant(random_tensor({5, 4, 16, 16}, rng));
  ad::NoGradGuard guard;
  CHECK(disc.score(x, ForwardContext{}).shape() == ad::Shape{5});
  for (const NamedParam& p : disc.parameters())
    for (double& v : p.var.node()->value.data) v = 0.0;
  const ad::Var scores = disc.score(x, ForwardContext{});
  for (double v : scores.value().data) CHECK(v == 0.0);
}

TEST_CASE("discriminator input gradient matches finite differences") {
  Discriminator disc(tiny_net(5, 2), 11);
  std::mt19937_64 rng(5);
  ad::Tensor x = random_tensor({1, 4, 5, 5}, rng);
  const ad::Var leaf(x, true);
  const std::vector<double> analytic =
      ad::grad(ad::sum(disc.score(leaf, ForwardContext{})), {leaf})[0].value().data;
  const std::vector<double> numeric = testsupport::fd_gradient(
      [&]() {
        ad::NoGradGuard guard;
        return disc.score(ad::constant(x), ForwardContext{}).item();
      },
      x.data);
  CHECK(testsupport::max_relative_error(analytic, numeric) <= 1e-5);
}

TEST_CASE("gradient penalty on critics with known input gradients") {
  const ad::Shape sample{4, 3, 3};
  std::mt19937_64 rng(6);
  std::vector<double> w = random_tensor({36}, rng).data;
  double norm = 0.0;
  for (double v : w) norm += v * v;
  for (double& v : w) v /= std::sqrt(norm);
  testsupport::AffineCritic unit(w, 0.3, sample);
  const ad::Var real = ad::constant(random_tensor({3, 4, 3, 3}, rng));
  const ad::Var fake = ad::constant(random_tensor({3, 4, 3, 3}, rng));
  const std::vector<double> eps{0.1, 0.5, 0.9};
  CHECK(std::abs(gradient_penalty(unit, real, fake, eps, {}).item()) <= 1e-24);

  for (double& v : w) v *= 3.0;
  testsupport::AffineCritic triple(w, 0.0, sample);
  CHECK(gradient_penalty(triple, real, fake, eps, {}).item() == doctest::Approx(4.0).epsilon(1e-12));

  ConstantCritic constant(2.0);
  CHECK(gradient_penalty(constant, real, fake, eps, {}).item() == doctest::Approx(1.0).epsilon(1e-15));

  CHECK_THROWS_AS(gradient_penalty(unit, real, fake, std::vector<double>{0.1, 0.5}, {}), Error);
  CHECK_THROWS_AS(gradient_penalty(unit, real, fake, std::vector<double>{0.1, 0.5, 1.5}, {}), Error);
}

TEST_CASE("gradient penalty parameter gradient matches finite differences") {
  Discriminator disc(tiny_net(8, 2), 12);
  std::mt19937_64 rng(7);
  const ad::Var real = ad::constant(random_tensor({2, 4, 8, 8}, rng));
  const ad::Var fake = ad::constant(random_tensor({2, 4, 8, 8}, rng));
  const std::vector<double> eps{0.25, 0.8};
  const std::vector<ad::Var> params = vars_of(disc.parameters());
  const ad::Var gp = gradient_penalty(disc, real, fake, eps, {});
  const std::vector<double> analytic = flatten(ad::grad(gp, params));
  const std::vector<double> numeric =
      param_fd(params, [&]() { return gradient_penalty(disc, real, fake, eps, {}).item(); });
  CHECK(testsupport::max_relative_error(analytic, numeric) <= 1e-5);
}

TEST_CASE("critic loss composition") {
  Generator gen(tiny_net(8, 2), 13);
  std::mt19937_64 rng(8);
  const ad::Var real = ad::constant(random_tensor({4, 4, 8, 8}, rng));
  const ad::Var z = sample_latent(4, 3, rng);
  const std::vector<double> eps{0.1, 0.4, 0.6, 0.95};

  ConstantCritic constant(1.7);
  CHECK(d_loss(constant, gen, real, z, eps, 10.0, {}, {}).total.item() == doctest::Approx(10.0).epsilon(1e-14));

  Discriminator zero(tiny_net(8, 2), 14);
  for (const NamedParam& p : zero.parameters())
    for (double& v : p.var.node()->value.data) v = 0.0;
  CHECK(d_loss(zero, gen, real, z, eps, 0.0, {}, {}).total.item() == 0.0);

  Discriminator disc(tiny_net(8, 2), 15);
  const DLoss dl = d_loss(disc, gen, real, z, eps, 10.0, {}, {});
  CHECK(dl.total.item() ==
        doctest::Approx(dl.fake_score - dl.real_score + 10.0 * dl.penalty).epsilon(1e-10));

  // The generator receives no gradient from the critic loss.
  const std::vector<ad::Var> gparams = vars_of(gen.parameters());
  for (const ad::Var& g : ad::grad(dl.total, gparams))
    for (double v : g.value().data) CHECK(v == 0.0);
}

TEST_CASE("generator loss composition and parameter gradient") {
  const NetworkConfig net = tiny_net(8, 2);
  Generator gen(net, 16);
  Discriminator disc(net, 17);
  const GridSpec g = make_grid(8, 8, 2.0, 2.0);
  const PhysicsLoss physics(g, BoundarySpec::left_right_dirichlet(1.0, 0.0), Field(g), PhysicsLossConfig{});
  ChannelStats stats;
  stats.mean = {0.1, 0.5, -0.2, 0.0};
  stats.stddev = {1.5, 0.3, 0.7, 2.0};
  std::mt19937_64 rng(9);
  const ad::Var z = sample_latent(3, 3, rng);

  const GLoss plain = g_loss_physics(disc, gen, z, physics, stats, 0.0, 0.0, {}, {true, nullptr});
  CHECK(plain.total.item() == plain.adversarial);
  CHECK(plain.residual > 0.0);

  const GLoss full = g_loss_physics(disc, gen, z, physics, stats, 1.0, 10.0, {}, {true, nullptr});
  CHECK(full.total.item() ==
        doctest::Approx(full.adversarial + full.residual + 10.0 * full.boundary).epsilon(1e-12));
  CHECK(full.adversarial == doctest::Approx(plain.adversarial).epsilon(1e-14));

  const std::vector<ad::Var> params = vars_of(gen.parameters());
  const std::vector<double> analytic = flatten(ad::grad(full.total, params));
  const std::vector<double> numeric = param_fd(params, [&]() {
    ad::NoGradGuard guard;
    return g_loss_physics(disc, gen, z, physics, stats, 1.0, 10.0, {}, {true, nullptr}).total.item();
  });
  CHECK(testsupport::max_relative_error(analytic, numeric) <= 1e-5);
}

TEST_CASE("Adam first step moves each entry by the learning rate") {
  const ad::Var p(ad::Tensor({3}, {1.0, -2.0, 0.5}), true);
  Adam adam({p}, AdamConfig{0.1, 0.5, 0.9, 1e-8});
  adam.step({ad::constant(ad::Tensor({3}, {4.0, -0.01, 2.0}))});
  CHECK(p.value().data[0] == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(p.value().data[1] == doctest::Approx(-1.9).epsilon(1e-6));
  CHECK(p.value().data[2] == doctest::Approx(0.4).epsilon(1e-9));
  CHECK(adam.steps() == 1);
  const double p1 = p.value().data[0];
  // Second step with a zero gradient: m = 0.5 m1, v = 0.9 v1 after decay.
  adam.step({ad::constant(ad::Tensor({3}, 0.0))});
  const double m_hat = 0.5 * 0.5 * 4.0 / (1.0 - 0.25);
  const double v_hat = 0.9 * 0.1 * 16.0 / (1.0 - 0.81);
  CHECK(p.value().data[0] == doctest::Approx(p1 - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-12));
}

TEST_CASE("trainer: zero iterations leave parameters unchanged") {
  const NetworkConfig net = tiny_net(8, 2);
  const GridSpec g = make_grid(8, 8, 2.0, 2.0);
  const PhysicsLoss physics(g, BoundarySpec::left_right_dirichlet(1.0, 0.0), Field(g), PhysicsLossConfig{});
  TrainConfig train;
  train.total_g_iterations = 0;
  train.batch_size = 4;
  Trainer trainer(net, train, physics, ChannelStats{});
  const std::vector<double> g0 = flatten(vars_of(trainer.generator().parameters()));
  const std::vector<double> d0 = flatten(vars_of(trainer.discriminator().parameters()));
  trainer.run(random_dataset(g, 8, 1));
  CHECK(flatten(vars_of(trainer.generator().parameters())) == g0);
  CHECK(flatten(vars_of(trainer.discriminator().parameters())) == d0);
  CHECK(trainer.log().empty());
}

TEST_CASE("trainer runs are reproducible from the seed") {
  const NetworkConfig net = tiny_net(8, 2);
  const GridSpec g = make_grid(8, 8, 2.0, 2.0);
  const PhysicsLoss physics(g, BoundarySpec::left_right_dirichlet(1.0, 0.0), Field(g), PhysicsLossConfig{});
  const FieldStack data = random_dataset(g, 10, 2);
  TrainConfig train;
  train.batch_size = 4;
  train.d_steps_per_g = 2;
  train.total_g_iterations = 3;
  auto run = [&](std::uint64_t seed) {
    TrainConfig t = train;
    t.seed = seed;
    Trainer trainer(net, t, physics, ChannelStats{});
    trainer.run(data);
    return std::make_pair(trainer.log(), flatten(vars_of(trainer.generator().parameters())));
  };
  const auto a = run(5);
  const auto b = run(5);
  const auto c = run(6);
  REQUIRE(a.first.size() == 3);
  CHECK(a.first.back().iteration == 3);
  CHECK(a.second == b.second);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(a.first[k].g_loss == b.first[k].g_loss);
    CHECK(a.first[k].d_loss == b.first[k].d_loss);
  }
  CHECK(a.second != c.second);

  // Splitting a run into pieces gives the same trajectory.
  TrainConfig t = train;
  t.seed = 5;
  Trainer split(net, t, physics, ChannelStats{});
  split.run(data, 1);
  CHECK(split.iteration() == 1);
  split.run(data, 5);
  CHECK(split.iteration() == 3);
  CHECK(flatten(vars_of(split.generator().parameters())) == a.second);
}

TEST_CASE("trainer rejects a dataset smaller than the batch") {
  const NetworkConfig net = tiny_net(8, 2);
  const GridSpec g = make_grid(8, 8, 2.0, 2.0);
  const PhysicsLoss physics(g, BoundarySpec::left_right_dirichlet(1.0, 0.0), Field(g), PhysicsLossConfig{});
  TrainConfig train;
  train.batch_size = 16;
  Trainer trainer(net, train, physics, ChannelStats{});
  CHECK_THROWS_AS(trainer.run(random_dataset(g, 8, 1)), Error);
}
