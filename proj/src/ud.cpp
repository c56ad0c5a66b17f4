#include "udfit/ud.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "udfit/encounter.hpp"
#include "udfit/errors.hpp"
#include "udfit/movement.hpp"

namespace udfit {

UDRaster normalize_ud(const Raster& intensity) {
  double total = 0.0;
  for (std::size_t i = 0; i < intensity.size(); ++i) {
    const double v = intensity[i];
    if (std::isnan(v)) throw MissingData("intensity missing at cell " + std::to_string(i));
    if (v < 0.0 || !std::isfinite(v))
      throw InvalidArgument("intensity must be finite and nonnegative");
    total += v;
  }
  if (!(total > 0.0)) throw InvalidArgument("cannot normalise an all-zero intensity");
  UDRaster ud{Raster(intensity.grid())};
  const double norm = total * intensity.grid().cell_area();
  for (std::size_t i = 0; i < intensity.size(); ++i) ud.raster[i] = intensity[i] / norm;
  return ud;
}

std::vector<double> mark_probability(std::span<const double> intensities) {
  if (intensities.size() < 2) throw InvalidArgument("mark_probability needs K >= 2 marks");
  double total = 0.0;
  for (double v : intensities) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw InvalidArgument("mark intensities must be finite and nonnegative");
    total += v;
  }
  if (!(total > 0.0)) throw UndefinedProbability("all mark intensities are zero at this location");
  std::vector<double> p(intensities.size());
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = intensities[k] / total;
  return p;
}

std::vector<Raster> mark_probability(const std::vector<Raster>& intensities) {
  if (intensities.size() < 2) throw InvalidArgument("mark_probability needs K >= 2 marks");
  const Grid& g = intensities.front().grid();
  for (const auto& r : intensities)
    if (!(r.grid() == g)) throw InvalidArgument("mark intensities are on different grids");
  std::vector<Raster> out(intensities.size(), Raster(g));
  std::vector<double> cell(intensities.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t k = 0; k < cell.size(); ++k) cell[k] = intensities[k][i];
    const auto p = mark_probability(cell);
    for (std::size_t k = 0; k < cell.size(); ++k) out[k][i] = p[k];
  }
  return out;
}

double percentile_threshold(std::span<const double> values, double pct) {
  if (!(pct > 0.0 && pct <= 100.0)) throw InvalidArgument("percentile must lie in (0, 100]");
  std::vector<double> v;
  v.reserve(values.size());
  for (double x : values)
    if (!std::isnan(x)) v.push_back(x);
  if (v.empty()) throw InvalidArgument("percentile of an empty set");
  const auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(v.size())));
  const std::size_t k = std::max<std::size_t>(rank, 1) - 1;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

ExceedanceMap exceedance_map(const FitResult& fit, const IntensityModel& model,
                             const ExceedanceOptions& options, std::uint64_t seed) {
  if (fit.singular) throw NumericalFailure("exceedance_map: fit has a singular information matrix");
  if (options.n_samples < 1) throw InvalidArgument("exceedance_map: n_samples must be >= 1");
  const auto n = fit.coefficients.size();
  if (fit.covariance.rows() != n || fit.covariance.cols() != n || !fit.covariance.allFinite())
    throw NumericalFailure("exceedance_map: covariance is missing or not finite");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.covariance);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-10 * scale)
    throw NumericalFailure("exceedance_map: covariance is not positive semidefinite");
  const Eigen::MatrixXd root =
      es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  const Grid& grid = model.grid;
  std::vector<double> above(grid.size(), 0.0);
  double fixed_threshold = 0.0;
  if (options.mode == ThresholdMode::kFixedEstimate) {
    const Raster est = intensity_raster(model, fit.coefficients, options.predict);
    fixed_threshold = percentile_threshold(est.values(), options.percentile);
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t s = 0; s < options.n_samples; ++s) {
    Rng rng(derive_seed(seed, s));
    Eigen::VectorXd z(n);
    for (Eigen::Index j = 0; j < n; ++j) z[j] = normal(rng);
    const Eigen::VectorXd theta = fit.coefficients + root * z;
    const Raster surface = intensity_raster(model, theta, options.predict);
    const double thr = options.mode == ThresholdMode::kPerDraw
                           ? percentile_threshold(surface.values(), options.percentile)
                           : fixed_threshold;
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (surface[i] > thr) above[i] += 1.0;
  }
  ExceedanceMap map;
  map.percentile = options.percentile;
  map.probability_cutoff = options.probability_cutoff;
  map.probabilities = Raster(grid);
  for (std::size_t i = 0; i < grid.size(); ++i)
    map.probabilities[i] = above[i] / static_cast<double>(options.n_samples);
  if (options.probability_cutoff) {
    map.masked = map.probabilities;
    for (double& v : map.masked->values())
      if (v < *options.probability_cutoff) v = std::numeric_limits<double>::quiet_NaN();
  }
  return map;
}

double mspe(const UDRaster& estimate, const UDRaster& truth) {
  if (!(estimate.raster.grid() == truth.raster.grid()))
    throw InvalidArgument("mspe: rasters are on different grids");
  double s = 0.0;
  const std::size_t n = truth.raster.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = estimate.raster[i] - truth.raster[i];
    s += d * d;
  }
  return s / static_cast<double>(n);
}

std::vector<Raster> quadratic_covariates(const Grid& grid, const QuadraticLayout& layout) {
  std::vector<Raster> cov(6, Raster(grid));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Point c = grid.center(i);
    const double x = (c.x - layout.center.x) / layout.scale;
    const double y = (c.y - layout.center.y) / layout.scale;
    cov[layout.intercept][i] = 1.0;
    cov[layout.x][i] = x;
    cov[layout.y][i] = y;
    cov[layout.xx][i] = x * x;
    cov[layout.yy][i] = y * y;
    cov[layout.xy][i] = x * y;
  }
  return cov;
}

std::optional<Point> ud_center(const Eigen::VectorXd& b, const QuadraticLayout& layout) {
  const auto at = [&](std::size_t k) { return b[static_cast<Eigen::Index>(k)]; };
  const double bxx = at(layout.xx), byy = at(layout.yy), bxy = at(layout.xy);
  // Hessian of the log-quadratic in scaled coordinates.
  const double hxx = 2.0 * bxx, hyy = 2.0 * byy;
  const double det = hxx * hyy - bxy * bxy;
  if (!(hxx < 0.0) || !(det > 0.0)) return std::nullopt;
  const double gx = -at(layout.x), gy = -at(layout.y);
  const double zx = (hyy * gx - bxy * gy) / det;
  const double zy = (hxx * gy - bxy * gx) / det;
  return Point{layout.center.x + layout.scale * zx, layout.center.y + layout.scale * zy};
}

std::optional<double> ud_center_bias(const FitResult& fit, double true_center_y,
                                     const QuadraticLayout& layout) {
  const auto c = ud_center(fit.coefficients, layout);
  if (!c) return std::nullopt;
  return c->y - true_center_y;
}

double median(std::vector<double> v) {
  if (v.empty()) throw InvalidArgument("median of an empty set");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

RobustInterval robust_interval(std::span<const double> values) {
  if (values.size() < 2) throw InvalidArgument("robust_interval needs at least two values");
  RobustInterval r;
  std::vector<double> v(values.begin(), values.end());
  r.median = median(v);
  for (double& x : v) x = std::abs(x - r.median);
  r.mad = median(std::move(v));
  const double half = 2.0 * kMadScale * r.mad;
  r.lo = r.median - half;
  r.hi = r.median + half;
  return r;
}

}  // namespace udfit
