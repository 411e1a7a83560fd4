#include "geoinpaint/discrete_ops.hpp"

#include <algorithm>

#include "geoinpaint/darcy.hpp"
#include "geoinpaint/error.hpp"

namespace geoinpaint {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

// Sobel stencil rows for output pixel `out`, reading channel `channel` of a
// packed sample; replicate padding merges clamped taps.
void append_sobel(Triplets& t, const GridSpec& g, Axis axis, int i, int j, int out, int channel, double weight) {
  const SobelKernels k = SobelKernels::for_grid(g);
  const auto& kernel = axis == Axis::X ? SobelKernels::horizontal : SobelKernels::vertical;
  const double s = -(axis == Axis::X ? k.scale_x : k.scale_y) * weight;
  const std::size_t offset = static_cast<std::size_t>(channel) * g.size();
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      if (kernel[a][b] == 0.0) continue;
      const int ii = std::clamp(i + b - 1, 0, g.nx() - 1);
      const int jj = std::clamp(j + a - 1, 0, g.ny() - 1);
      t.emplace_back(out, static_cast<int>(offset + g.index(ii, jj)), s * kernel[a][b]);
    }
}

bool included(const GridSpec& g, int i, int j, bool crop) {
  return !crop || (i > 0 && i < g.nx() - 1 && j > 0 && j < g.ny() - 1);
}

ad::Tensor broadcast_rows(const std::vector<double>& row, int batch) {
  ad::Tensor t({batch, static_cast<int>(row.size())});
  for (int b = 0; b < batch; ++b) std::copy(row.begin(), row.end(), t.data.begin() + static_cast<std::ptrdiff_t>(b * row.size()));
  return t;
}

Field apply_sobel(const Field& f, Axis axis) {
  const ad::LinearMapPtr map = sobel_map(f.grid, axis);
  ad::NoGradGuard guard;
  const ad::Var out = ad::apply_map(ad::constant(ad::Tensor({1, f.grid.ny(), f.grid.nx()}, f.values)), map);
  return Field(f.grid, out.value().data);
}

}  // namespace

SobelKernels SobelKernels::for_grid(const GridSpec& grid) {
  return SobelKernels{1.0 / (8.0 * grid.dx()), 1.0 / (8.0 * grid.dy())};
}

void PhysicsLossConfig::validate() const {
  require(lambda_r >= 0.0 && lambda_b >= 0.0, ErrorCode::InvalidArgument, "physics loss weights must be nonnegative");
}

ad::LinearMapPtr sobel_map(const GridSpec& grid, Axis axis) {
  Triplets t;
  t.reserve(grid.size() * 6);
  for (int j = 0; j < grid.ny(); ++j)
    for (int i = 0; i < grid.nx(); ++i) append_sobel(t, grid, axis, i, j, static_cast<int>(grid.index(i, j)), 0, 1.0);
  const ad::Shape image{1, grid.ny(), grid.nx()};
  return ad::make_linear_map(grid.size(), grid.size(), t, image, image);
}

Field sobel_x(const Field& f) { return apply_sobel(f, Axis::X); }
Field sobel_y(const Field& f) { return apply_sobel(f, Axis::Y); }

PhysicsLoss::PhysicsLoss(const GridSpec& grid, const BoundarySpec& bc, const Field& source,
                         const PhysicsLossConfig& cfg)
    : grid_(grid) {
  cfg.validate();
  require(source.grid == grid, ErrorCode::GridMismatch, "source field grid differs from loss grid");
  const std::size_t in = kChannels * grid.size();
  const ad::Shape in_shape{kChannels, grid.ny(), grid.nx()};

  Triplets lnk, f1, f2, gx, gy, div;
  int row = 0;
  for (int j = 0; j < grid.ny(); ++j)
    for (int i = 0; i < grid.nx(); ++i) {
      if (!included(grid, i, j, cfg.interior_crop)) continue;
      const int p = static_cast<int>(grid.index(i, j));
      lnk.emplace_back(row, p, 1.0);
      f1.emplace_back(row, static_cast<int>(2 * grid.size()) + p, 1.0);
      f2.emplace_back(row, static_cast<int>(3 * grid.size()) + p, 1.0);
      append_sobel(gx, grid, Axis::X, i, j, row, 1, 1.0);
      append_sobel(gy, grid, Axis::Y, i, j, row, 1, 1.0);
      append_sobel(div, grid, Axis::X, i, j, row, 2, 1.0);
      append_sobel(div, grid, Axis::Y, i, j, row, 3, 1.0);
      source_.push_back(source.at(i, j));
      ++row;
    }
  residual_pixels_ = static_cast<std::size_t>(row);
  const ad::Shape out_shape{row};
  pick_lnk_ = ad::make_linear_map(residual_pixels_, in, lnk, out_shape, in_shape);
  pick_f1_ = ad::make_linear_map(residual_pixels_, in, f1, out_shape, in_shape);
  pick_f2_ = ad::make_linear_map(residual_pixels_, in, f2, out_shape, in_shape);
  grad_h_x_ = ad::make_linear_map(residual_pixels_, in, gx, out_shape, in_shape);
  grad_h_y_ = ad::make_linear_map(residual_pixels_, in, gy, out_shape, in_shape);
  divergence_ = ad::make_linear_map(residual_pixels_, in, div, out_shape, in_shape);

  // Boundary pixels: every side contributes its full edge, corners included
  // once per side. Dirichlet sides compare the head extrapolated to the face,
  // (3 h0 - h1) / 2; Neumann sides compare the normal flux component.
  Triplets bnd;
  int m = 0;
  const auto h_off = static_cast<int>(grid.size());
  for (Side side : {Side::Left, Side::Right, Side::Bottom, Side::Top}) {
    const SideCondition& c = bc[side];
    const bool vertical_side = side == Side::Left || side == Side::Right;
    const int count = vertical_side ? grid.ny() : grid.nx();
    for (int t = 0; t < count; ++t) {
      int i0, j0, i1, j1;
      switch (side) {
        case Side::Left: i0 = 0, j0 = t, i1 = 1, j1 = t; break;
        case Side::Right: i0 = grid.nx() - 1, j0 = t, i1 = grid.nx() - 2, j1 = t; break;
        case Side::Bottom: i0 = t, j0 = 0, i1 = t, j1 = 1; break;
        default: i0 = t, j0 = grid.ny() - 1, i1 = t, j1 = grid.ny() - 2; break;
      }
      if (c.type == BoundaryType::Dirichlet) {
        bnd.emplace_back(m, h_off + static_cast<int>(grid.index(i0, j0)), 1.5);
        bnd.emplace_back(m, h_off + static_cast<int>(grid.index(i1, j1)), -0.5);
        boundary_targets_.push_back(c.value);
      } else {
        const int channel = vertical_side ? 2 : 3;
        bnd.emplace_back(m, channel * static_cast<int>(grid.size()) + static_cast<int>(grid.index(i0, j0)), 1.0);
        boundary_targets_.push_back(prescribed_flux_component(side, c.value));
      }
      ++m;
    }
  }
  boundary_pixels_ = static_cast<std::size_t>(m);
  boundary_values_ = ad::make_linear_map(boundary_pixels_, in, bnd, ad::Shape{m}, in_shape);
}

ad::Var PhysicsLoss::residual_per_sample(const ad::Var& x) const {
  const ad::Shape& s = x.shape();
  require(s.size() == 4 && s[1] == kChannels && s[2] == grid_.ny() && s[3] == grid_.nx(), ErrorCode::ShapeMismatch,
          "residual loss expects [B, 4, ny, nx], got " + ad::to_string(s));
  const int batch = s[0];
  const ad::Var k = ad::exp(ad::apply_map(x, pick_lnk_));
  const ad::Var r1 = ad::add(ad::apply_map(x, pick_f1_), ad::mul(k, ad::apply_map(x, grad_h_x_)));
  const ad::Var r2 = ad::add(ad::apply_map(x, pick_f2_), ad::mul(k, ad::apply_map(x, grad_h_y_)));
  std::vector<double> minus_q(source_.size());
  std::transform(source_.begin(), source_.end(), minus_q.begin(), [](double v) { return -v; });
  const ad::Var r3 = ad::add_const(ad::apply_map(x, divergence_), broadcast_rows(minus_q, batch));
  const ad::Var total = ad::add(ad::add(ad::square(r1), ad::square(r2)), ad::square(r3));
  return ad::scale(ad::sample_sum(total), 1.0 / static_cast<double>(residual_pixels_));
}

ad::Var PhysicsLoss::boundary_per_sample(const ad::Var& x) const {
  const ad::Shape& s = x.shape();
  require(s.size() == 4 && s[1] == kChannels && s[2] == grid_.ny() && s[3] == grid_.nx(), ErrorCode::ShapeMismatch,
          "boundary loss expects [B, 4, ny, nx], got " + ad::to_string(s));
  std::vector<double> minus_target(boundary_targets_.size());
  std::transform(boundary_targets_.begin(), boundary_targets_.end(), minus_target.begin(),
                 [](double v) { return -v; });
  const ad::Var diff = ad::add_const(ad::apply_map(x, boundary_values_), broadcast_rows(minus_target, s[0]));
  return ad::scale(ad::sample_sum(ad::square(diff)), 1.0 / static_cast<double>(boundary_pixels_));
}

namespace {
ad::Var as_batch(std::span<const double> sample, const GridSpec& grid) {
  require(sample.size() == kChannels * grid.size(), ErrorCode::ShapeMismatch, "packed sample size");
  return ad::constant(ad::Tensor({1, kChannels, grid.ny(), grid.nx()}, std::vector<double>(sample.begin(), sample.end())));
}
}  // namespace

double residual_loss(std::span<const double> sample, const GridSpec& grid, const Field& source,
                     const PhysicsLossConfig& cfg) {
  ad::NoGradGuard guard;
  const PhysicsLoss loss(grid, BoundarySpec::left_right_dirichlet(1.0, 0.0), source, cfg);
  return loss.residual(as_batch(sample, grid)).item();
}

double boundary_loss(std::span<const double> sample, const GridSpec& grid, const BoundarySpec& bc) {
  ad::NoGradGuard guard;
  const PhysicsLoss loss(grid, bc, Field(grid), PhysicsLossConfig{});
  return loss.boundary(as_batch(sample, grid)).item();
}

}  // namespace geoinpaint
