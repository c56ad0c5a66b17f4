#pragma once

#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "udfit/geometry.hpp"

namespace udfit {

using Rng = std::mt19937_64;

enum class PotentialKind { kBivariateNormal, kHalfNormalY, kCustomLogDensity };

// Log-density whose gradient drives the movement SDE. For the half-normal-y
// kind only `center.y` is used and the density is flat in x.
struct PotentialSpec {
  PotentialKind kind = PotentialKind::kBivariateNormal;
  Point center{};
  double variance = 1.0;
  std::function<double(const Point&)> custom_log_density;

  static PotentialSpec bivariate_normal(Point center, double variance);
  static PotentialSpec half_normal_y(double center_y, double variance);
  static PotentialSpec custom(std::function<double(const Point&)> log_density);
  // Zero-gradient custom potential: pure reflected Brownian motion.
  static PotentialSpec flat();

  void validate() const;
};

// How the potential gradient enters the drift.
//   kGradient: drift = grad log pi. The stationary variance of a Gaussian
//              potential then scales with the Brownian variance.
//   kLangevin: drift = (sigma^2 / 2) grad log pi, whose stationary density
//              is pi itself.
enum class DriftScaling { kGradient, kLangevin };

struct MovementSpec {
  PotentialSpec potential;
  double bm_variance = 2.0;  // per unit time
  double dt = 1.0;
  DriftScaling scaling = DriftScaling::kGradient;

  void validate() const;
};

struct Trajectory {
  std::vector<Point> positions;
  double dt = 1.0;
  int entity = 0;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

double potential_log_density(const PotentialSpec& spec, const Point& p);
Vec2 log_density_gradient(const PotentialSpec& spec, const Point& p);
Vec2 drift(const MovementSpec& spec, const Point& p);

// Folds a coordinate back into [lo, hi] by mirror reflection at the walls.
double reflect_into(double v, double lo, double hi);

// One Euler-Maruyama step followed by coordinate-wise reflection.
Point step(const MovementSpec& spec, const Point& p, const StudyRegion& region, Rng& rng);

Trajectory simulate_trajectory(const MovementSpec& spec, const Point& start, std::size_t n_steps,
                               const StudyRegion& region, Rng& rng, int entity = 0);

// Long-run density of the discretised chain. For the Gaussian kinds this is
// a Gaussian of the same center whose variance solves the AR(1) recursion
// v_s = sigma^2 dt / (1 - (1 - c dt / v)^2), c the drift scale. Throws
// DegenerateSpec when the chain is unstable (c dt / v >= 2).
PotentialSpec stationary_potential(const MovementSpec& spec);

// Draw from the density truncated to the region. Gaussian kinds propose from
// the Gaussian itself; custom kinds use a uniform envelope. Throws
// DegenerateSpec after kMaxRejectionAttempts proposals.
inline constexpr long kMaxRejectionAttempts = 1'000'000;
Point sample_initial(const PotentialSpec& spec, const StudyRegion& region, Rng& rng);

// Normalised density raster (cell mass / cell area) of a Gaussian kind
// truncated to the grid's region. Custom kinds throw Unsupported.
Raster analytic_ud(const PotentialSpec& spec, const Grid& grid);

// CSV `entity,step,x,y`.
void write_trajectories_csv(std::ostream& out, const std::vector<Trajectory>& trajs);
std::vector<Trajectory> read_trajectories_csv(std::istream& in, double dt = 1.0);

}  // namespace udfit
