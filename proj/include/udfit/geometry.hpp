#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace udfit {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

double distance(const Point& a, const Point& b);

// Axis-aligned rectangular study region.
struct StudyRegion {
  double xmin = 0.0;
  double xmax = 1.0;
  double ymin = 0.0;
  double ymax = 1.0;

  // Throws InvalidArgument unless xmax > xmin and ymax > ymin.
  void validate() const;
  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
  bool contains(const Point& p) const;

  friend bool operator==(const StudyRegion&, const StudyRegion&) = default;
};

struct CellIndex {
  std::size_t ix = 0;
  std::size_t iy = 0;

  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

// Regular lattice of nx * ny equal cells. Linear cell index is iy * nx + ix
// with (0, 0) at (xmin, ymin).
class Grid {
 public:
  Grid() = default;
  Grid(const StudyRegion& region, std::size_t nx, std::size_t ny);

  const StudyRegion& region() const { return region_; }
  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t size() const { return nx_ * ny_; }
  double dx() const { return region_.width() / static_cast<double>(nx_); }
  double dy() const { return region_.height() / static_cast<double>(ny_); }
  double cell_area() const { return cell_area_; }

  std::size_t index(std::size_t ix, std::size_t iy) const { return iy * nx_ + ix; }
  CellIndex cell(std::size_t index) const { return {index % nx_, index / nx_}; }
  Point center(std::size_t index) const;

  // Cell containing p. Points on an interior cell boundary belong to the
  // lower-index neighbour. Throws OutOfDomain outside the region.
  std::size_t cell_of(const Point& p) const;

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.region_ == b.region_ && a.nx_ == b.nx_ && a.ny_ == b.ny_;
  }

 private:
  StudyRegion region_{};
  std::size_t nx_ = 0;
  std::size_t ny_ = 0;
  double cell_area_ = 0.0;
};

Grid build_grid(const StudyRegion& region, long nx, long ny);

// Values on a grid, one per cell. NaN marks a missing value.
class Raster {
 public:
  Raster() = default;
  explicit Raster(Grid grid, double fill = 0.0);
  Raster(Grid grid, std::vector<double> values);

  const Grid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  bool is_missing(std::size_t i) const;
  bool has_missing() const;
  double sum() const;
  // Sum of value * cell_area over non-missing cells.
  double integral() const;

 private:
  Grid grid_{};
  std::vector<double> values_;
};

// Value of the cell containing p. Throws MissingData for a missing cell.
double raster_lookup(const Raster& r, const Point& p);

// Raster whose cell values are f(cell center).
template <typename F>
Raster raster_from_function(const Grid& grid, F&& f) {
  Raster r(grid);
  for (std::size_t i = 0; i < grid.size(); ++i) r[i] = f(grid.center(i));
  return r;
}

}  // namespace udfit
