#include "geoinpaint/inpaint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <unordered_set>

#include "geoinpaint/error.hpp"

namespace geoinpaint {

namespace {

std::vector<std::size_t> draw_pixels(std::size_t n, std::size_t pixels, std::mt19937_64& rng) {
  std::vector<std::size_t> pool(pixels);
  for (std::size_t p = 0; p < pixels; ++p) pool[p] = p;
  for (std::size_t k = 0; k < n; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pixels - 1);
    std::swap(pool[k], pool[pick(rng)]);
  }
  pool.resize(n);
  return pool;
}

Field mask_of(const GridSpec& grid, const std::vector<std::size_t>& pixels) {
  Field m(grid);
  for (std::size_t p : pixels) m.values[p] = 1.0;
  return m;
}

}  // namespace

Field MeasurementSet::mask_k() const { return mask_of(grid, k_pixels); }
Field MeasurementSet::mask_h() const { return mask_of(grid, h_pixels); }

void MeasurementSet::validate() const {
  require(k_pixels.size() == k_values.size() && h_pixels.size() == h_values.size(), ErrorCode::LengthMismatch,
          "measurement values must match observed pixel counts");
  for (const auto* pixels : {&k_pixels, &h_pixels}) {
    std::unordered_set<std::size_t> seen;
    for (std::size_t p : *pixels) {
      require(p < grid.size(), ErrorCode::OutOfRange, "observation outside the grid");
      require(seen.insert(p).second, ErrorCode::InvalidArgument, "pixel observed twice in one channel");
    }
  }
  for (const auto* values : {&k_values, &h_values})
    for (double v : *values) require(std::isfinite(v), ErrorCode::InvalidArgument, "observation is not finite");
}

MeasurementSet sample_measurements(std::span<const double> truth, const GridSpec& grid, std::size_t n_k,
                                   std::size_t n_h, std::uint64_t seed) {
  require(truth.size() == kChannels * grid.size(), ErrorCode::ShapeMismatch, "truth must be a packed 4-channel sample");
  require(n_k <= grid.size() && n_h <= grid.size(), ErrorCode::CountExceedsGrid,
          "cannot observe more pixels than the grid holds");
  MeasurementSet m;
  m.grid = grid;
  m.seed = seed;
  std::mt19937_64 rng(seed);
  m.k_pixels = draw_pixels(n_k, grid.size(), rng);
  m.h_pixels = draw_pixels(n_h, grid.size(), rng);
  for (std::size_t p : m.k_pixels) m.k_values.push_back(truth[p]);
  for (std::size_t p : m.h_pixels) m.h_values.push_back(truth[grid.size() + p]);
  return m;
}

ContextLoss::ContextLoss(const MeasurementSet& meas) : grid_(meas.grid) {
  meas.validate();
  std::vector<Eigen::Triplet<double>> t;
  int row = 0;
  for (std::size_t k = 0; k < meas.n_k(); ++k, ++row) {
    t.emplace_back(row, static_cast<int>(meas.k_pixels[k]), 1.0);
    targets_.push_back(meas.k_values[k]);
  }
  for (std::size_t k = 0; k < meas.n_h(); ++k, ++row) {
    t.emplace_back(row, static_cast<int>(grid_.size() + meas.h_pixels[k]), 1.0);
    targets_.push_back(meas.h_values[k]);
  }
  pick_ = ad::make_linear_map(static_cast<std::size_t>(row), kChannels * grid_.size(), t, ad::Shape{row},
                              ad::Shape{kChannels, grid_.ny(), grid_.nx()});
}

ad::Var ContextLoss::per_sample(const ad::Var& x) const {
  const ad::Shape& s = x.shape();
  require(s.size() == 4 && s[1] == kChannels && s[2] == grid_.ny() && s[3] == grid_.nx(), ErrorCode::ShapeMismatch,
          "context loss expects [B, 4, ny, nx], got " + ad::to_string(s));
  const int batch = s[0];
  ad::Tensor minus(ad::Shape{batch, static_cast<int>(targets_.size())});
  for (int b = 0; b < batch; ++b)
    for (std::size_t k = 0; k < targets_.size(); ++k) minus.data[b * targets_.size() + k] = -targets_[k];
  return ad::sample_sum(ad::abs(ad::add_const(ad::apply_map(x, pick_), minus)));
}

double context_loss(std::span<const double> sample, const MeasurementSet& meas) {
  ad::NoGradGuard guard;
  const ContextLoss loss(meas);
  require(sample.size() == kChannels * meas.grid.size(), ErrorCode::ShapeMismatch, "packed sample size");
  const ad::Var x = ad::constant(
      ad::Tensor({1, kChannels, meas.grid.ny(), meas.grid.nx()}, std::vector<double>(sample.begin(), sample.end())));
  return loss.per_sample(x).item();
}

ad::Var prior_loss(Critic& critic, LatentGenerator& gen, const ad::Var& z, const ForwardContext& ctx) {
  return ad::neg(critic.score(gen.generate(z, ctx), ctx));
}

void InpaintConfig::validate() const {
  require(lambda_p >= 0.0, ErrorCode::Config, "lambda_p must be >= 0");
  require(learning_rate > 0.0, ErrorCode::Config, "inpainting learning_rate must be positive");
  require(final_learning_rate <= learning_rate, ErrorCode::Config,
          "final_learning_rate must not exceed learning_rate");
  require(max_iterations >= 0, ErrorCode::Config, "max_iterations must be >= 0");
  require(restarts >= 1, ErrorCode::Config, "restarts must be at least 1");
}

ad::Tensor initial_latents(const InpaintConfig& cfg, int z_dim) {
  ad::Tensor z({cfg.restarts, z_dim});
  for (int r = 0; r < cfg.restarts; ++r) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(r)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    for (int k = 0; k < z_dim; ++k) z.data[static_cast<std::size_t>(r) * z_dim + k] = normal(rng);
  }
  return z;
}

std::vector<RestartResult> optimize_z(LatentGenerator& gen, Critic& critic, const ChannelStats& stats,
                                      const MeasurementSet& meas, const InpaintConfig& cfg, const ad::Tensor& z0) {
  cfg.validate();
  require(!meas.empty(), ErrorCode::EmptyMeasurements, "inpainting needs at least one observation");
  require(z0.shape.size() == 2 && z0.shape[1] == gen.z_dim(), ErrorCode::ShapeMismatch,
          "initial latents must be [R, z_dim]");
  const ContextLoss context(meas);
  const ForwardContext eval{};
  const int rows = z0.shape[0];
  const std::size_t zd = static_cast<std::size_t>(gen.z_dim());

  ad::Var z(z0, true);
  Adam adam({z}, AdamConfig{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, 1e-8});
  std::vector<RestartResult> out(static_cast<std::size_t>(rows));
  for (auto& r : out) r.loss = std::numeric_limits<double>::infinity();

  for (int it = 0; it <= cfg.max_iterations; ++it) {
    const ad::Var x = gen.generate(z, eval);
    const ad::Var phys = stats.destandardize(x);
    const ad::Var lc = context.per_sample(phys);
    ad::Var total = lc;
    if (cfg.lambda_p > 0.0) total = ad::add(total, ad::scale(ad::neg(critic.score(x, eval)), cfg.lambda_p));

    bool any_active = false;
    for (int r = 0; r < rows; ++r) {
      RestartResult& res = out[r];
      if (res.failed) continue;
      const double loss = total.value().data[r];
      if (!std::isfinite(loss)) {
        res.failed = true;
        continue;
      }
      any_active = true;
      res.trace.push_back(loss);
      if (loss < res.loss) {
        res.loss = loss;
        res.context = lc.value().data[r];
        res.best_iteration = it;
        res.z.assign(z.value().data.begin() + static_cast<std::ptrdiff_t>(r * zd),
                     z.value().data.begin() + static_cast<std::ptrdiff_t>((r + 1) * zd));
        res.sample.assign(phys.value().data.begin() + static_cast<std::ptrdiff_t>(r * phys.size() / rows),
                          phys.value().data.begin() + static_cast<std::ptrdiff_t>((r + 1) * phys.size() / rows));
      }
    }
    if (it == cfg.max_iterations || !any_active) break;

    ad::Var g = ad::grad(ad::sum(total), {z})[0];
    // Failed rows stop moving; their non-finite gradients must not reach Adam.
    for (int r = 0; r < rows; ++r)
      if (out[r].failed)
        std::fill_n(g.mutable_value().data.begin() + static_cast<std::ptrdiff_t>(r * zd), zd, 0.0);
    if (cfg.final_learning_rate > 0.0 && cfg.max_iterations > 1)
      adam.set_learning_rate(cfg.learning_rate *
                             std::pow(cfg.final_learning_rate / cfg.learning_rate,
                                      static_cast<double>(it) / (cfg.max_iterations - 1)));
    adam.step({g});
  }
  return out;
}

InpaintResult inpaint(LatentGenerator& gen, Critic& critic, const ChannelStats& stats, const MeasurementSet& meas,
                      const InpaintConfig& cfg) {
  cfg.validate();
  require(!meas.empty(), ErrorCode::EmptyMeasurements, "inpainting needs at least one observation");
  InpaintResult result;
  result.restarts = optimize_z(gen, critic, stats, meas, cfg, initial_latents(cfg, gen.z_dim()));
  std::size_t used = 0;
  for (const RestartResult& r : result.restarts) {
    if (r.failed) {
      ++result.failures;
      continue;
    }
    if (result.mean.empty()) result.mean.assign(r.sample.size(), 0.0);
    for (std::size_t k = 0; k < r.sample.size(); ++k) result.mean[k] += r.sample[k];
    ++used;
  }
  require(used > 0, ErrorCode::Divergence, "every inpainting restart hit a non-finite loss");
  for (double& v : result.mean) v /= static_cast<double>(used);
  return result;
}

}  // namespace geoinpaint
