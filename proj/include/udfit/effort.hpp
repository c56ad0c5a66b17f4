#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "udfit/encounter.hpp"
#include "udfit/geometry.hpp"
#include "udfit/movement.hpp"

namespace udfit {

enum class FieldOfView { kIndicator, kDetectionWeighted };

struct EffortMeta {
  double detection_range = 0.0;
  std::string correction = "none";  // path-integral, overlap, binned, scaled, combined
};

// Cumulative effort per cell, as effort density (effort per unit area).
struct EffortField {
  Raster raster;
  EffortMeta meta;

  const Grid& grid() const { return raster.grid(); }
  double total() const { return raster.integral(); }
};

// Sum over every track position of the field-of-view weight at each cell
// center, times dt. The field of view is evaluated at cell centers only.
EffortField path_integral_effort(const std::vector<Trajectory>& tracks, const Grid& grid,
                                 double range, FieldOfView mode);

// Tracks are simultaneous: position k of every track belongs to the same
// step. Per cell and step the effort is 1 - prod_o (1 - p_o), times dt.
EffortField overlap_corrected_effort(const std::vector<Trajectory>& tracks, const Grid& grid,
                                     double range,
                                     FieldOfView mode = FieldOfView::kDetectionWeighted);

// Trip-wise versions over a simulated dataset.
EffortField path_integral_effort(const EncounterDataset& ds, const Grid& grid, double range,
                                 FieldOfView mode);
EffortField overlap_corrected_effort(const EncounterDataset& ds, const Grid& grid, double range,
                                     FieldOfView mode = FieldOfView::kDetectionWeighted);

struct TimedFix {
  double time = 0.0;
  Point position;
};

// Linear interpolation onto t0, t0 + interval, ... <= t_end. The result's dt
// is `interval`.
Trajectory regularize_track(const std::vector<TimedFix>& fixes, double interval);

// Each position counts dt of effort in its own cell.
EffortField bin_track_effort(const Trajectory& traj, const Grid& grid);

// Piecewise-linear cumulative fraction of daily effort against hours into
// the operational day.
class DailyEffortCDF {
 public:
  DailyEffortCDF() = default;
  explicit DailyEffortCDF(std::vector<std::pair<double, double>> knots);
  static DailyEffortCDF uniform(double day_length);

  double day_length() const { return knots_.back().first; }
  const std::vector<std::pair<double, double>>& knots() const { return knots_; }

 private:
  std::vector<std::pair<double, double>> knots_;
};

double daily_fraction(const DailyEffortCDF& cdf, double tau);
// Sum over days of F(tau_d); the multiplier applied to a period's maximum
// effort surface.
double fraction_sum(const DailyEffortCDF& cdf, const std::vector<double>& taus);
// Fraction of the period's effort spent before the daily first sightings.
double mean_daily_fraction(const DailyEffortCDF& cdf, const std::vector<double>& taus);

// JSON array of {"tau_hours": .., "fraction": ..} knots.
DailyEffortCDF read_daily_cdf_json(std::istream& in);
void write_daily_cdf_json(std::ostream& out, const DailyEffortCDF& cdf);

EffortField scale_effort(const EffortField& base, double fraction_sum);
EffortField combine_effort(const std::vector<EffortField>& fields);

struct EffortEnsemble {
  std::vector<EffortField> members;
};

using EffortSampler = std::function<EffortField(Rng&)>;

// Member g is drawn with Rng(derive_seed(seed, g)).
EffortEnsemble mc_effort_ensemble(const EffortSampler& generator, std::size_t G,
                                  std::uint64_t seed);

// log(effort) per cell, -inf where effort is zero.
Raster log_effort_offset(const EffortField& effort);

// GPS CSV `observer,timestamp_iso8601,x,y`; times returned in hours since
// the Unix epoch, fixes sorted by time per observer.
std::map<std::string, std::vector<TimedFix>> read_gps_csv(std::istream& in);
double parse_iso8601_hours(const std::string& text);

}  // namespace udfit
