#include <functional>
#include <random>

#include "doctest.h"
#include "geoinpaint/autodiff.hpp"
#include "geoinpaint/error.hpp"
#include "support/fd.hpp"

using namespace geoinpaint;
using namespace geoinpaint::ad;

namespace {

using ScalarFn = std::function<Var(const std::vector<Var>&)>;

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.data) v = u(rng);
  return t;
}

// Compares reverse-mode gradients of f at `values` with central differences.
double check_gradients(const ScalarFn& f, std::vector<Tensor> values) {
  std::vector<Var> leaves;
  for (const Tensor& t : values) leaves.emplace_back(t, true);
  const std::vector<Var> grads = grad(f(leaves), leaves);
  double worst = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    // Leaves stay differentiable so functions that call grad() internally work.
    auto eval = [&]() {
      std::vector<Var> xs;
      for (const Tensor& t : values) xs.emplace_back(t, true);
      return f(xs).item();
    };
    const std::vector<double> numeric = testsupport::fd_gradient(eval, values[k].data);
    worst = std::max(worst, testsupport::max_relative_error(grads[k].value().data, numeric));
  }
  return worst;
}

// f -> |grad f|^2, exercising differentiation of a backward pass.
ScalarFn grad_norm_of(const ScalarFn& f) {
  return [f](const std::vector<Var>& xs) {
    const std::vector<Var> g = grad(f(xs), {xs[0]}, true);
    return sum(square(g[0]));
  };
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  std::mt19937_64 rng(1);
  const Shape s{3, 4};
  const Tensor a = random_tensor(s, rng);
  const Tensor b = random_tensor(s, rng);
  const Tensor pos = random_tensor(s, rng, 0.5, 2.0);
  const Tensor c = random_tensor(s, rng);

  CHECK(check_gradients([](const std::vector<Var>& x) { return sum(mul(add(x[0], x[1]), sub(x[0], x[1]))); },
                        {a, b}) <= 1e-6);
  CHECK(check_gradients([](const std::vector<Var>& x) { return sum(exp(scale(x[0], 0.7))); }, {a}) <= 1e-6);
  CHECK(check_gradients([](const std::vector<Var>& x) { return sum(pow(x[0], -0.5)); }, {pos}) <= 1e-6);
  CHECK(check_gradients([](const std::vector<Var>& x) { return sum(safe_sqrt(x[0])); }, {pos}) <= 1e-6);
  CHECK(check_gradients([](const std::vector<Var>& x) { return sum(safe_recip(x[0])); }, {pos}) <= 1e-6);
  CHECK(check_gradients([&](const std::vector<Var>& x) { return mean(mul_const(square(x[0]), c)); }, {a}) <= 1e-6);
  CHECK(check_gradients([&](const std::vector<Var>& x) { return sum(abs(add_const(x[0], c))); }, {a}) <= 1e-6);
  CHECK(check_gradients([](const std::vector<Var>& x) { return sum(square(leaky_relu(x[0], 0.2))); }, {a}) <= 1e-6);
  CHECK(check_gradients([](const std::vector<Var>& x) { return sum(mul(relu(x[0]), x[0])); }, {a}) <= 1e-6);
}

TEST_CASE("reductions, broadcasts and matmul match finite differences") {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({2, 3, 2, 2}, rng);
  const Tensor v = random_tensor({3}, rng);
  const Tensor a = random_tensor({4, 3}, rng);
  const Tensor b = random_tensor({3, 5}, rng);
  CHECK(check_gradients([](const std::vector<Var>& in) { return sum(square(channel_sum(in[0]))); }, {x}) <= 1e-6);
  CHECK(check_gradients([](const std::vector<Var>& in) { return sum(square(sample_sum(in[0]))); }, {x}) <= 1e-6);
  CHECK(check_gradients(
            [&](const std::vector<Var>& in) {
              return sum(mul(channel_expand(in[1], x.shape), square(in[0])));
            },
            {x, v}) <= 1e-6);
  CHECK(check_gradients([](const std::vector<Var>& in) { return sum(square(matmul(in[0], in[1]))); }, {a, b}) <=
        1e-6);
  CHECK(check_gradients(
            [](const std::vector<Var>& in) {
              return sum(square(transpose(reshape(in[0], {2, 6}))));
            },
            {a}) <= 1e-6);
  CHECK(check_gradients(
            [](const std::vector<Var>& in) {
              return sum(square(embed_channel(select_channel(in[0], 1), 4, 2)));
            },
            {x}) <= 1e-6);
}

TEST_CASE("convolutions match a direct loop") {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({2, 3, 5, 6}, rng);
  const Tensor w = random_tensor({4, 3, 3, 3}, rng);
  Var y;
  {
    NoGradGuard guard;
    y = conv2d(constant(x), constant(w), 2, 1);
  }
  REQUIRE(y.shape() == Shape({2, 4, 3, 3}));
  for (int n = 0; n < 2; ++n)
    for (int co = 0; co < 4; ++co)
      for (int oy = 0; oy < 3; ++oy)
        for (int ox = 0; ox < 3; ++ox) {
          double acc = 0.0;
          for (int ci = 0; ci < 3; ++ci)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = oy * 2 + ky - 1;
                const int ix = ox * 2 + kx - 1;
                if (iy < 0 || iy >= 5 || ix < 0 || ix >= 6) continue;
                acc += x.data[((n * 3 + ci) * 5 + iy) * 6 + ix] * w.data[((co * 3 + ci) * 3 + ky) * 3 + kx];
              }
          CHECK(y.value().data[((n * 4 + co) * 3 + oy) * 3 + ox] == doctest::Approx(acc).epsilon(1e-13));
        }
}

TEST_CASE("transposed convolution is the adjoint of convolution") {
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor({2, 3, 8, 8}, rng);
  const Tensor w = random_tensor({5, 3, 4, 4}, rng);
  const Tensor gy = random_tensor({2, 5, 4, 4}, rng);
  NoGradGuard guard;
  const Var y = conv2d(constant(x), constant(w), 2, 1);
  const Var xt = conv_transpose2d(constant(gy), constant(w), 2, 1, 8, 8);
  double lhs = 0.0;
  double rhs = 0.0;
  for (std::size_t i = 0; i < gy.size(); ++i) lhs += y.value().data[i] * gy.data[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x.data[i] * xt.value().data[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("convolution gradients match finite differences") {
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({2, 2, 6, 6}, rng);
  const Tensor w = random_tensor({3, 2, 4, 4}, rng);
  const Tensor g = random_tensor({2, 3, 3, 3}, rng);
  const Tensor wt = random_tensor({3, 2, 4, 4}, rng);
  CHECK(check_gradients([](const std::vector<Var>& in) { return sum(square(conv2d(in[0], in[1], 2, 1))); },
                        {x, w}) <= 1e-6);
  CHECK(check_gradients(
            [](const std::vector<Var>& in) {
              return sum(square(conv_transpose2d(in[0], in[1], 2, 1, 6, 6)));
            },
            {g, wt}) <= 1e-6);
  CHECK(check_gradients(
            [](const std::vector<Var>& in) {
              return sum(square(conv2d_weight_grad(in[0], in[1], 2, 1, 4)));
            },
            {x, g}) <= 1e-6);
}

TEST_CASE("second derivatives through backward passes") {
  std::mt19937_64 rng(6);
  const Tensor x = random_tensor({2, 2, 6, 6}, rng);
  const Tensor w = random_tensor({3, 2, 4, 4}, rng);
  const Tensor m = random_tensor({12, 5}, rng);
  // A small critic-like composition: conv -> leaky -> dense.
  const ScalarFn critic = [&](const std::vector<Var>& in) {
    const Var h = leaky_relu(conv2d(in[0], in[1], 2, 1), 0.2);
    const Var flat = reshape(h, {2, 27});
    return sum(exp(scale(matmul(flat, reshape(in[2], {27, 1})), 0.3)));
  };
  const Tensor v = random_tensor({27}, rng);
  // Penalty-like functional of the input gradient, differentiated w.r.t. all.
  const ScalarFn penalty = [&](const std::vector<Var>& in) {
    const std::vector<Var> g = grad(critic(in), {in[0]}, true);
    return sum(square(add_scalar(safe_sqrt(sample_sum(square(g[0]))), -1.0)));
  };
  CHECK(check_gradients(penalty, {x, w, v}) <= 1e-5);
  CHECK(check_gradients(grad_norm_of([](const std::vector<Var>& in) { return sum(exp(matmul(in[0], in[1]))); }),
                        {random_tensor({3, 12}, rng), m}) <= 1e-5);
}

TEST_CASE("sparse linear maps and their adjoints") {
  std::vector<Eigen::Triplet<double>> t{{0, 0, 2.0}, {0, 3, -1.0}, {1, 1, 0.5}, {2, 2, 1.0}, {2, 0, 1.0}};
  const LinearMapPtr map = make_linear_map(3, 4, t, Shape{3}, Shape{2, 2});
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({2, 2, 2}, rng);
  {
    NoGradGuard guard;
    const Var y = apply_map(constant(x), map);
    CHECK(y.shape() == Shape({2, 3}));
    CHECK(y.value().data[0] == doctest::Approx(2.0 * x.data[0] - x.data[3]).epsilon(1e-15));
    CHECK(y.value().data[5] == doctest::Approx(x.data[6] + x.data[4]).epsilon(1e-15));
  }
  CHECK(check_gradients([&](const std::vector<Var>& in) { return sum(square(apply_map(in[0], map))); }, {x}) <=
        1e-6);
  CHECK(check_gradients(
            [&](const std::vector<Var>& in) {
              return sum(exp(apply_map_adjoint(in[0], map)));
            },
            {random_tensor({2, 3}, rng)}) <= 1e-6);
}

TEST_CASE("graph bookkeeping") {
  const Var a(Tensor({2}, std::vector<double>{1.0, 2.0}), true);
  const Var unused(Tensor({3}, 1.0), true);
  const std::vector<Var> g = grad(sum(square(a)), {a, unused});
  CHECK(g[0].value().data == std::vector<double>{2.0, 4.0});
  CHECK(g[1].value().data == std::vector<double>{0.0, 0.0, 0.0});

  // The same node reached along two paths accumulates both contributions.
  const Var b = mul(a, a);
  const Var g2 = grad(sum(add(b, b)), {a})[0];
  CHECK(g2.value().data == std::vector<double>{4.0, 8.0});

  {
    NoGradGuard guard;
    CHECK_FALSE(mul(a, a).requires_grad());
  }
  CHECK(mul(a, a).requires_grad());
  CHECK_THROWS_AS(add(a, unused), Error);
  CHECK_THROWS_AS(sum(a).item() + a.item(), Error);
}
