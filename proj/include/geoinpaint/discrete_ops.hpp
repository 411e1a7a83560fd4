#pragma once

#include <array>
#include <span>
#include <vector>

#include "geoinpaint/autodiff.hpp"
#include "geoinpaint/grid.hpp"

namespace geoinpaint {

/// 3x3 Sobel kernels, rows indexed along y, columns along x, applied as a
/// cross-correlation over the row-major (y-outer) image with replicate
/// padding. Applied that way both kernels respond with minus the gradient, so
/// the operators negate and scale by 1/(8 d) to return +df/dx1 and +df/dx2.
struct SobelKernels {
  using Kernel = std::array<std::array<double, 3>, 3>;
  static constexpr Kernel horizontal{{{1.0, 0.0, -1.0}, {2.0, 0.0, -2.0}, {1.0, 0.0, -1.0}}};
  static constexpr Kernel vertical{{{1.0, 2.0, 1.0}, {0.0, 0.0, 0.0}, {-1.0, -2.0, -1.0}}};

  double scale_x = 1.0;
  double scale_y = 1.0;

  static SobelKernels for_grid(const GridSpec& grid);
};

enum class Axis { X, Y };

struct PhysicsLossConfig {
  double lambda_r = 1.0;
  double lambda_b = 10.0;
  /// Evaluate the residual on interior pixels only.
  bool interior_crop = true;

  void validate() const;
};

Field sobel_x(const Field& f);
Field sobel_y(const Field& f);

/// Per-sample sparse operator for one Sobel derivative over an ny x nx image.
ad::LinearMapPtr sobel_map(const GridSpec& grid, Axis axis);

/// Residual and boundary losses of physical-unit (lnK, h, F1, F2) batches
/// shaped [B, 4, ny, nx]. All sparse operators are assembled once.
class PhysicsLoss {
 public:
  PhysicsLoss(const GridSpec& grid, const BoundarySpec& bc, const Field& source, const PhysicsLossConfig& cfg);

  /// (|F + K grad h|^2 + |div F - q|^2) / N per sample, shape [B].
  ad::Var residual_per_sample(const ad::Var& x) const;
  /// (|h(x_D) - h_D|^2 + |F(x_N) - F_N|^2) / M per sample, shape [B].
  ad::Var boundary_per_sample(const ad::Var& x) const;

  ad::Var residual(const ad::Var& x) const { return ad::mean(residual_per_sample(x)); }
  ad::Var boundary(const ad::Var& x) const { return ad::mean(boundary_per_sample(x)); }

  const GridSpec& grid() const noexcept { return grid_; }
  std::size_t residual_pixels() const noexcept { return residual_pixels_; }
  std::size_t boundary_pixels() const noexcept { return boundary_pixels_; }

 private:
  GridSpec grid_;
  std::size_t residual_pixels_ = 0;
  std::size_t boundary_pixels_ = 0;
  ad::LinearMapPtr pick_lnk_, pick_f1_, pick_f2_;
  ad::LinearMapPtr grad_h_x_, grad_h_y_, divergence_;
  std::vector<double> source_;
  ad::LinearMapPtr boundary_values_;
  std::vector<double> boundary_targets_;
};

/// Value-only conveniences for a single packed 4-channel sample.
double residual_loss(std::span<const double> sample, const GridSpec& grid, const Field& source,
                     const PhysicsLossConfig& cfg);
double boundary_loss(std::span<const double> sample, const GridSpec& grid, const BoundarySpec& bc);

}  // namespace geoinpaint
