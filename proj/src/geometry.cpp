#include "udfit/geometry.hpp"

#include <cmath>
#include <string>

#include "udfit/errors.hpp"

namespace udfit {

double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

void StudyRegion::validate() const {
  if (!(std::isfinite(xmin) && std::isfinite(xmax) && std::isfinite(ymin) &&
        std::isfinite(ymax)))
    throw InvalidArgument("study region bounds must be finite");
  if (!(xmax > xmin) || !(ymax > ymin))
    throw InvalidArgument("study region requires xmax > xmin and ymax > ymin");
}

bool StudyRegion::contains(const Point& p) const {
  return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax;
}

Grid::Grid(const StudyRegion& region, std::size_t nx, std::size_t ny)
    : region_(region), nx_(nx), ny_(ny) {
  region_.validate();
  if (nx == 0 || ny == 0) throw InvalidArgument("grid cell counts must be positive");
  cell_area_ = region_.area() / (static_cast<double>(nx) * static_cast<double>(ny));
}

Point Grid::center(std::size_t index) const {
  const CellIndex c = cell(index);
  return {region_.xmin + (static_cast<double>(c.ix) + 0.5) * dx(),
          region_.ymin + (static_cast<double>(c.iy) + 0.5) * dy()};
}

namespace {

// ceil(t) - 1 sends exact interior boundaries to the lower cell.
std::size_t axis_cell(double offset, double step, std::size_t n) {
  const double t = offset / step;
  double k = std::ceil(t) - 1.0;
  if (k < 0.0) k = 0.0;
  const auto max_k = static_cast<double>(n - 1);
  if (k > max_k) k = max_k;
  return static_cast<std::size_t>(k);
}

}  // namespace

std::size_t Grid::cell_of(const Point& p) const {
  if (!region_.contains(p)) {
    throw OutOfDomain("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                      ") lies outside the study region");
  }
  const std::size_t ix = axis_cell(p.x - region_.xmin, dx(), nx_);
  const std::size_t iy = axis_cell(p.y - region_.ymin, dy(), ny_);
  return index(ix, iy);
}

Grid build_grid(const StudyRegion& region, long nx, long ny) {
  if (nx < 1 || ny < 1) throw InvalidArgument("build_grid: nx and ny must be >= 1");
  return Grid(region, static_cast<std::size_t>(nx), static_cast<std::size_t>(ny));
}

Raster::Raster(Grid grid, double fill) : grid_(std::move(grid)), values_(grid_.size(), fill) {}

Raster::Raster(Grid grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_.size())
    throw InvalidArgument("raster value count " + std::to_string(values_.size()) +
                          " does not match grid size " + std::to_string(grid_.size()));
}

bool Raster::is_missing(std::size_t i) const { return std::isnan(values_[i]); }

bool Raster::has_missing() const {
  for (double v : values_)
    if (std::isnan(v)) return true;
  return false;
}

double Raster::sum() const {
  double s = 0.0;
  for (double v : values_)
    if (!std::isnan(v)) s += v;
  return s;
}

double Raster::integral() const { return sum() * grid_.cell_area(); }

double raster_lookup(const Raster& r, const Point& p) {
  const std::size_t i = r.grid().cell_of(p);
  if (r.is_missing(i)) throw MissingData("raster value missing at cell " + std::to_string(i));
  return r[i];
}

}  // namespace udfit
