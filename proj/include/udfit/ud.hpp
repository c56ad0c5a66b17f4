#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "udfit/geometry.hpp"
#include "udfit/ppm.hpp"

namespace udfit {

// Probability density per unit area; sum of value * cell_area is 1.
struct UDRaster {
  Raster raster;
};

UDRaster normalize_ud(const Raster& intensity);

// p_k = lambda_k / sum lambda. Throws UndefinedProbability when every
// intensity is zero.
std::vector<double> mark_probability(std::span<const double> intensities);
// Cellwise version over K mark-specific intensity rasters.
std::vector<Raster> mark_probability(const std::vector<Raster>& intensities);

// Nearest-rank percentile (0 < pct <= 100) of the non-missing values.
double percentile_threshold(std::span<const double> values, double pct);

enum class ThresholdMode {
  kPerDraw,        // threshold recomputed from each sampled surface
  kFixedEstimate,  // threshold from the point-estimate surface, reused
};

struct ExceedanceOptions {
  double percentile = 70.0;
  std::size_t n_samples = 1000;
  std::optional<double> probability_cutoff;  // e.g. 0.95
  ThresholdMode mode = ThresholdMode::kPerDraw;
  PredictOptions predict{};
};

struct ExceedanceMap {
  Raster probabilities;            // fraction of draws above the threshold
  std::optional<Raster> masked;    // NaN where probability < cutoff
  double percentile = 70.0;
  std::optional<double> probability_cutoff;
};

// Coefficients are drawn from N(fit.coefficients, fit.covariance). A zero
// covariance gives indicator maps of the point estimate. Throws
// NumericalFailure for a singular fit or a covariance that is not PSD.
ExceedanceMap exceedance_map(const FitResult& fit, const IntensityModel& model,
                             const ExceedanceOptions& options, std::uint64_t seed);

// Mean over cells of (estimate - truth)^2.
double mspe(const UDRaster& estimate, const UDRaster& truth);

// Position of the env coefficients of a log-quadratic surface in scaled
// coordinates (x - center.x) / scale, (y - center.y) / scale.
struct QuadraticLayout {
  std::size_t intercept = 0, x = 1, y = 2, xx = 3, yy = 4, xy = 5;
  Point center{50.0, 50.0};
  double scale = 50.0;
};

// Env covariate rasters [1, x, y, x^2, y^2, xy] in the layout's coordinates.
std::vector<Raster> quadratic_covariates(const Grid& grid, const QuadraticLayout& layout = {});

// Maximiser of the fitted log-quadratic surface; nullopt when the fitted
// quadratic is not strictly concave.
std::optional<Point> ud_center(const Eigen::VectorXd& coefficients, const QuadraticLayout& layout = {});
std::optional<double> ud_center_bias(const FitResult& fit, double true_center_y,
                                     const QuadraticLayout& layout = {});

struct RobustInterval {
  double median = 0.0;
  double mad = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

inline constexpr double kMadScale = 1.48;
double median(std::vector<double> values);
// median +/- 2 * 1.48 * MAD.
RobustInterval robust_interval(std::span<const double> values);

}  // namespace udfit
