#include "geoinpaint/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "geoinpaint/error.hpp"

namespace geoinpaint {

GridSpec make_grid(int nx, int ny, double lx, double ly) {
  require(nx >= 3 && ny >= 3, ErrorCode::DimensionTooSmall,
          "grid needs at least 3x3 cells, got " + std::to_string(nx) + "x" + std::to_string(ny));
  require(lx > 0.0 && ly > 0.0 && std::isfinite(lx) && std::isfinite(ly), ErrorCode::InvalidArgument,
          "domain extents must be positive");
  GridSpec g;
  g.nx_ = nx;
  g.ny_ = ny;
  g.lx_ = lx;
  g.ly_ = ly;
  return g;
}

std::size_t GridSpec::flatten_index(int i, int j) const {
  require(i >= 0 && i < nx_ && j >= 0 && j < ny_, ErrorCode::OutOfRange,
          "cell (" + std::to_string(i) + ", " + std::to_string(j) + ") outside grid");
  return index(i, j);
}

Field::Field(const GridSpec& g, std::vector<double> v) : grid(g), values(std::move(v)) {
  require(values.size() == grid.size(), ErrorCode::LengthMismatch, "field value count does not match grid");
}

bool Field::all_finite() const noexcept {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

FieldStack::FieldStack(const GridSpec& grid, std::size_t count)
    : grid_(grid), count_(count), data_(count * kChannels * grid.size(), 0.0) {}

std::span<double> FieldStack::sample(std::size_t s) {
  require(s < count_, ErrorCode::OutOfRange, "sample index");
  return {data_.data() + s * sample_size(), sample_size()};
}

std::span<const double> FieldStack::sample(std::size_t s) const {
  require(s < count_, ErrorCode::OutOfRange, "sample index");
  return {data_.data() + s * sample_size(), sample_size()};
}

std::span<double> FieldStack::channel(std::size_t s, Channel c) {
  return sample(s).subspan(static_cast<std::size_t>(c) * grid_.size(), grid_.size());
}

std::span<const double> FieldStack::channel(std::size_t s, Channel c) const {
  return sample(s).subspan(static_cast<std::size_t>(c) * grid_.size(), grid_.size());
}

Field FieldStack::field(std::size_t s, Channel c) const {
  auto ch = channel(s, c);
  return Field(grid_, std::vector<double>(ch.begin(), ch.end()));
}

void FieldStack::set_field(std::size_t s, Channel c, const Field& f) {
  require(f.grid == grid_, ErrorCode::GridMismatch, "field grid differs from stack grid");
  std::copy(f.values.begin(), f.values.end(), channel(s, c).begin());
}

void FieldStack::push_back(std::span<const double> sample) {
  require(sample.size() == sample_size(), ErrorCode::ShapeMismatch, "sample size");
  data_.insert(data_.end(), sample.begin(), sample.end());
  ++count_;
}

bool FieldStack::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool BoundarySpec::has_dirichlet() const noexcept {
  return std::any_of(sides.begin(), sides.end(),
                     [](const SideCondition& s) { return s.type == BoundaryType::Dirichlet; });
}

BoundarySpec BoundarySpec::left_right_dirichlet(double left_h, double right_h, double bottom_flux,
                                                double top_flux) {
  BoundarySpec bc;
  bc[Side::Left] = {BoundaryType::Dirichlet, left_h};
  bc[Side::Right] = {BoundaryType::Dirichlet, right_h};
  bc[Side::Bottom] = {BoundaryType::Neumann, bottom_flux};
  bc[Side::Top] = {BoundaryType::Neumann, top_flux};
  return bc;
}

}  // namespace geoinpaint
