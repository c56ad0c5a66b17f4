#include "udfit/movement.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "udfit/errors.hpp"
#include "udfit/raster_io.hpp"

namespace udfit {

PotentialSpec PotentialSpec::bivariate_normal(Point center, double variance) {
  PotentialSpec s;
  s.kind = PotentialKind::kBivariateNormal;
  s.center = center;
  s.variance = variance;
  return s;
}

PotentialSpec PotentialSpec::half_normal_y(double center_y, double variance) {
  PotentialSpec s;
  s.kind = PotentialKind::kHalfNormalY;
  s.center = {0.0, center_y};
  s.variance = variance;
  return s;
}

PotentialSpec PotentialSpec::custom(std::function<double(const Point&)> log_density) {
  PotentialSpec s;
  s.kind = PotentialKind::kCustomLogDensity;
  s.custom_log_density = std::move(log_density);
  return s;
}

PotentialSpec PotentialSpec::flat() {
  return custom([](const Point&) { return 0.0; });
}

void PotentialSpec::validate() const {
  if (kind == PotentialKind::kCustomLogDensity) {
    if (!custom_log_density) throw InvalidArgument("custom potential requires a log-density");
    return;
  }
  if (!(variance > 0.0) || !std::isfinite(variance))
    throw InvalidArgument("potential variance must be positive");
}

void MovementSpec::validate() const {
  potential.validate();
  if (!(bm_variance > 0.0) || !std::isfinite(bm_variance))
    throw InvalidArgument("Brownian variance must be positive");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("time step must be positive");
}

double potential_log_density(const PotentialSpec& spec, const Point& p) {
  switch (spec.kind) {
    case PotentialKind::kBivariateNormal: {
      const double dx = p.x - spec.center.x;
      const double dy = p.y - spec.center.y;
      return -(dx * dx + dy * dy) / (2.0 * spec.variance);
    }
    case PotentialKind::kHalfNormalY: {
      const double dy = p.y - spec.center.y;
      return -(dy * dy) / (2.0 * spec.variance);
    }
    case PotentialKind::kCustomLogDensity:
      return spec.custom_log_density(p);
  }
  return 0.0;
}

Vec2 log_density_gradient(const PotentialSpec& spec, const Point& p) {
  switch (spec.kind) {
    case PotentialKind::kBivariateNormal:
      return {(spec.center.x - p.x) / spec.variance, (spec.center.y - p.y) / spec.variance};
    case PotentialKind::kHalfNormalY:
      return {0.0, (spec.center.y - p.y) / spec.variance};
    case PotentialKind::kCustomLogDensity: {
      const double hx = 1e-5 * std::max(1.0, std::abs(p.x));
      const double hy = 1e-5 * std::max(1.0, std::abs(p.y));
      const auto& f = spec.custom_log_density;
      return {(f({p.x + hx, p.y}) - f({p.x - hx, p.y})) / (2 * hx),
              (f({p.x, p.y + hy}) - f({p.x, p.y - hy})) / (2 * hy)};
    }
  }
  return {};
}

namespace {

double drift_scale(const MovementSpec& spec) {
  return spec.scaling == DriftScaling::kLangevin ? spec.bm_variance / 2.0 : 1.0;
}

}  // namespace

Vec2 drift(const MovementSpec& spec, const Point& p) {
  const Vec2 g = log_density_gradient(spec.potential, p);
  const double c = drift_scale(spec);
  return {c * g.x, c * g.y};
}

double reflect_into(double v, double lo, double hi) {
  const double w = hi - lo;
  if (v >= lo && v <= hi) return v;
  double t = std::fmod(v - lo, 2.0 * w);
  if (t < 0.0) t += 2.0 * w;
  return t <= w ? lo + t : lo + 2.0 * w - t;
}

Point step(const MovementSpec& spec, const Point& p, const StudyRegion& region, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const Vec2 d = drift(spec, p);
  const double sd = std::sqrt(spec.bm_variance * spec.dt);
  const double zx = normal(rng);
  const double zy = normal(rng);
  return {reflect_into(p.x + d.x * spec.dt + sd * zx, region.xmin, region.xmax),
          reflect_into(p.y + d.y * spec.dt + sd * zy, region.ymin, region.ymax)};
}

Trajectory simulate_trajectory(const MovementSpec& spec, const Point& start, std::size_t n_steps,
                               const StudyRegion& region, Rng& rng, int entity) {
  spec.validate();
  if (!region.contains(start)) throw OutOfDomain("trajectory start outside the study region");
  Trajectory t;
  t.dt = spec.dt;
  t.entity = entity;
  t.positions.reserve(n_steps + 1);
  t.positions.push_back(start);
  Point p = start;
  for (std::size_t i = 0; i < n_steps; ++i) {
    p = step(spec, p, region, rng);
    t.positions.push_back(p);
  }
  return t;
}

PotentialSpec stationary_potential(const MovementSpec& spec) {
  spec.validate();
  const double c = drift_scale(spec);
  PotentialSpec out = spec.potential;
  if (spec.potential.kind == PotentialKind::kCustomLogDensity) {
    // Continuous-time limit: pi_s proportional to pi^(2c / sigma^2).
    const double power = 2.0 * c / spec.bm_variance;
    auto f = spec.potential.custom_log_density;
    out.custom_log_density = [f, power](const Point& p) { return power * f(p); };
    return out;
  }
  const double a = c * spec.dt / spec.potential.variance;
  if (!(a > 0.0 && a < 2.0))
    throw DegenerateSpec("movement chain is unstable: drift factor c*dt/variance = " +
                         std::to_string(a) + " must lie in (0, 2)");
  const double r = 1.0 - a;
  out.variance = spec.bm_variance * spec.dt / (1.0 - r * r);
  return out;
}

Point sample_initial(const PotentialSpec& spec, const StudyRegion& region, Rng& rng) {
  spec.validate();
  region.validate();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> ux(region.xmin, region.xmax);
  std::uniform_real_distribution<double> uy(region.ymin, region.ymax);
  const double sd = std::sqrt(spec.variance);

  if (spec.kind == PotentialKind::kCustomLogDensity) {
    // Envelope from a coarse lattice scan; a margin of log(4) covers
    // sub-lattice peaks of smooth densities.
    double lmax = -std::numeric_limits<double>::infinity();
    constexpr int kScan = 101;
    for (int i = 0; i < kScan; ++i)
      for (int j = 0; j < kScan; ++j) {
        const Point q{region.xmin + region.width() * i / (kScan - 1.0),
                      region.ymin + region.height() * j / (kScan - 1.0)};
        lmax = std::max(lmax, spec.custom_log_density(q));
      }
    if (!std::isfinite(lmax)) throw DegenerateSpec("custom density has no finite mass in region");
    lmax += std::log(4.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (long k = 0; k < kMaxRejectionAttempts; ++k) {
      const Point q{ux(rng), uy(rng)};
      if (std::log(u01(rng)) < spec.custom_log_density(q) - lmax) return q;
    }
    throw DegenerateSpec("rejection sampling failed for custom density");
  }

  for (long k = 0; k < kMaxRejectionAttempts; ++k) {
    Point q;
    if (spec.kind == PotentialKind::kBivariateNormal) {
      q = {spec.center.x + sd * normal(rng), spec.center.y + sd * normal(rng)};
    } else {
      q = {ux(rng), spec.center.y + sd * normal(rng)};
    }
    if (region.contains(q)) return q;
  }
  throw DegenerateSpec("rejection sampling: density has negligible mass inside the region");
}

namespace {

double normal_cdf(double x, double mean, double sd) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0)));
}

// Probability mass of each of n equal bins on [lo, hi].
std::vector<double> bin_masses(double lo, double hi, std::size_t n, double mean, double sd) {
  std::vector<double> m(n);
  const double w = (hi - lo) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = lo + w * static_cast<double>(i);
    const double b = i + 1 == n ? hi : a + w;
    // Difference on the smaller tail keeps precision far from the mean.
    if (a >= mean)
      m[i] = normal_cdf(-a, -mean, sd) - normal_cdf(-b, -mean, sd);
    else
      m[i] = normal_cdf(b, mean, sd) - normal_cdf(a, mean, sd);
  }
  return m;
}

}  // namespace

Raster analytic_ud(const PotentialSpec& spec, const Grid& grid) {
  spec.validate();
  if (spec.kind == PotentialKind::kCustomLogDensity)
    throw Unsupported("analytic_ud requires a built-in potential with known normalisation");
  const StudyRegion& r = grid.region();
  const double sd = std::sqrt(spec.variance);
  std::vector<double> mx;
  if (spec.kind == PotentialKind::kBivariateNormal)
    mx = bin_masses(r.xmin, r.xmax, grid.nx(), spec.center.x, sd);
  else
    mx.assign(grid.nx(), 1.0 / static_cast<double>(grid.nx()));
  const std::vector<double> my = bin_masses(r.ymin, r.ymax, grid.ny(), spec.center.y, sd);
  double total = 0.0;
  for (double a : mx)
    for (double b : my) total += a * b;
  if (!(total > 0.0)) throw DegenerateSpec("potential has no mass inside the region");
  Raster ud(grid);
  for (std::size_t iy = 0; iy < grid.ny(); ++iy)
    for (std::size_t ix = 0; ix < grid.nx(); ++ix)
      ud[grid.index(ix, iy)] = mx[ix] * my[iy] / total / grid.cell_area();
  return ud;
}

void write_trajectories_csv(std::ostream& out, const std::vector<Trajectory>& trajs) {
  out << "entity,step,x,y\n";
  for (const auto& t : trajs)
    for (std::size_t i = 0; i < t.positions.size(); ++i)
      out << t.entity << ',' << i << ',' << format_double(t.positions[i].x) << ','
          << format_double(t.positions[i].y) << '\n';
}

std::vector<Trajectory> read_trajectories_csv(std::istream& in, double dt) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("entity,step,x,y", 0) != 0)
    throw IoError("trajectory CSV: expected header 'entity,step,x,y'");
  std::map<int, std::map<long, Point>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::istringstream ss(line);
    std::string e, s, x, y;
    const std::string ctx = "trajectory CSV line " + std::to_string(line_no);
    if (!std::getline(ss, e, ',') || !std::getline(ss, s, ',') || !std::getline(ss, x, ',') ||
        !std::getline(ss, y))
      throw IoError(ctx + ": expected 4 fields");
    rows[std::stoi(e)][std::stol(s)] = {parse_double(x, ctx), parse_double(y, ctx)};
  }
  std::vector<Trajectory> out;
  for (auto& [entity, steps] : rows) {
    Trajectory t;
    t.entity = entity;
    t.dt = dt;
    for (auto& [k, p] : steps) t.positions.push_back(p);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace udfit
