#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace geoinpaint {

/// Uniform cell-centred discretisation of the rectangle [0, lx] x [0, ly].
///
/// Cell (i, j) has its centre at ((i + 0.5) dx, (j + 0.5) dy); i runs along
/// x, j along y. Storage everywhere in the library is row-major with y as the
/// outer index, so a field is directly an ny x nx image.
class GridSpec {
 public:
  GridSpec() = default;

  int nx() const noexcept { return nx_; }
  int ny() const noexcept { return ny_; }
  double lx() const noexcept { return lx_; }
  double ly() const noexcept { return ly_; }
  double dx() const noexcept { return lx_ / nx_; }
  double dy() const noexcept { return ly_ / ny_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(nx_) * ny_; }

  double x_center(int i) const noexcept { return (i + 0.5) * dx(); }
  double y_center(int j) const noexcept { return (j + 0.5) * dy(); }

  /// Linear index j * nx + i. Throws OutOfRange outside the grid.
  std::size_t flatten_index(int i, int j) const;
  std::size_t index(int i, int j) const noexcept { return static_cast<std::size_t>(j) * nx_ + i; }

  bool operator==(const GridSpec&) const = default;

 private:
  friend GridSpec make_grid(int nx, int ny, double lx, double ly);
  int nx_ = 0;
  int ny_ = 0;
  double lx_ = 0.0;
  double ly_ = 0.0;
};

/// Throws DimensionTooSmall for nx or ny below 3 and InvalidArgument for
/// non-positive extents.
GridSpec make_grid(int nx, int ny, double lx, double ly);

struct Field {
  GridSpec grid;
  std::vector<double> values;

  Field() = default;
  explicit Field(const GridSpec& g, double fill = 0.0) : grid(g), values(g.size(), fill) {}
  Field(const GridSpec& g, std::vector<double> v);

  double& at(int i, int j) noexcept { return values[grid.index(i, j)]; }
  double at(int i, int j) const noexcept { return values[grid.index(i, j)]; }
  bool all_finite() const noexcept;
};

enum class Channel : int { LnK = 0, Head = 1, FluxX = 2, FluxY = 3 };
inline constexpr int kChannels = 4;

/// A batch of 4-channel samples (lnK, h, F1, F2) on a common grid. Layout is
/// sample-major, then channel, then row-major pixels.
class FieldStack {
 public:
  FieldStack() = default;
  FieldStack(const GridSpec& grid, std::size_t count);

  const GridSpec& grid() const noexcept { return grid_; }
  std::size_t count() const noexcept { return count_; }
  std::size_t sample_size() const noexcept { return kChannels * grid_.size(); }

  std::span<double> sample(std::size_t s);
  std::span<const double> sample(std::size_t s) const;
  std::span<double> channel(std::size_t s, Channel c);
  std::span<const double> channel(std::size_t s, Channel c) const;

  Field field(std::size_t s, Channel c) const;
  void set_field(std::size_t s, Channel c, const Field& f);

  void push_back(std::span<const double> sample);
  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }
  bool all_finite() const noexcept;

 private:
  GridSpec grid_;
  std::size_t count_ = 0;
  std::vector<double> data_;
};

enum class Side : int { Left = 0, Right = 1, Bottom = 2, Top = 3 };
enum class BoundaryType { Dirichlet, Neumann };

/// Dirichlet sides carry a head value; Neumann sides carry the outward
/// normal Darcy flux F.n (length/time).
struct SideCondition {
  BoundaryType type = BoundaryType::Neumann;
  double value = 0.0;
};

struct BoundarySpec {
  std::array<SideCondition, 4> sides;

  const SideCondition& operator[](Side s) const noexcept { return sides[static_cast<int>(s)]; }
  SideCondition& operator[](Side s) noexcept { return sides[static_cast<int>(s)]; }
  bool has_dirichlet() const noexcept;

  /// Default flow configuration: head prescribed on left and right, prescribed
  /// flux on top and bottom.
  static BoundarySpec left_right_dirichlet(double left_h, double right_h, double bottom_flux = 0.0,
                                           double top_flux = 0.0);
};

}  // namespace geoinpaint
