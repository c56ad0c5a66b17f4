#include "udfit/effort.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "udfit/errors.hpp"
#include "udfit/raster_io.hpp"

namespace udfit {

namespace {

// Calls f(cell, weight) for every cell whose center lies within range of p
// and has a positive field-of-view weight.
template <typename F>
void for_cells_in_view(const Grid& grid, const Point& p, double range, FieldOfView mode, F&& f) {
  const StudyRegion& r = grid.region();
  const double dx = grid.dx();
  const double dy = grid.dy();
  const auto clamp_index = [](double v, std::size_t n) {
    if (v < 0.0) return std::size_t{0};
    const auto max_i = static_cast<double>(n - 1);
    return static_cast<std::size_t>(v > max_i ? max_i : v);
  };
  const double fx0 = std::floor((p.x - range - r.xmin) / dx - 0.5);
  const double fx1 = std::ceil((p.x + range - r.xmin) / dx - 0.5);
  const double fy0 = std::floor((p.y - range - r.ymin) / dy - 0.5);
  const double fy1 = std::ceil((p.y + range - r.ymin) / dy - 0.5);
  if (fx1 < 0.0 || fy1 < 0.0) return;
  if (fx0 > static_cast<double>(grid.nx() - 1) || fy0 > static_cast<double>(grid.ny() - 1)) return;
  const std::size_t ix0 = clamp_index(fx0, grid.nx()), ix1 = clamp_index(fx1, grid.nx());
  const std::size_t iy0 = clamp_index(fy0, grid.ny()), iy1 = clamp_index(fy1, grid.ny());
  for (std::size_t iy = iy0; iy <= iy1; ++iy) {
    const double cy = r.ymin + (static_cast<double>(iy) + 0.5) * dy;
    for (std::size_t ix = ix0; ix <= ix1; ++ix) {
      const double cx = r.xmin + (static_cast<double>(ix) + 0.5) * dx;
      const double d = std::hypot(cx - p.x, cy - p.y);
      if (d > range) continue;
      const double w = mode == FieldOfView::kIndicator ? 1.0 : 1.0 - d / range;
      if (w > 0.0) f(grid.index(ix, iy), w);
    }
  }
}

double common_dt(const std::vector<Trajectory>& tracks) {
  double dt = 0.0;
  for (const auto& t : tracks) {
    if (t.empty()) continue;
    if (!(t.dt > 0.0)) throw InvalidArgument("track time step must be positive");
    if (dt == 0.0)
      dt = t.dt;
    else if (t.dt != dt)
      throw InvalidArgument("tracks must share one time step");
  }
  return dt;
}

void check_range(double range) {
  if (!(range > 0.0) || !std::isfinite(range))
    throw InvalidArgument("detection range must be positive");
}

std::string mode_name(FieldOfView mode) {
  return mode == FieldOfView::kIndicator ? "indicator" : "detection-weighted";
}

void accumulate_path_integral(const std::vector<Trajectory>& tracks, double range,
                              FieldOfView mode, Raster& out) {
  const double dt = common_dt(tracks);
  for (const auto& t : tracks)
    for (const Point& p : t.positions)
      for_cells_in_view(out.grid(), p, range, mode,
                        [&](std::size_t cell, double w) { out[cell] += w * dt; });
}

void accumulate_overlap(const std::vector<Trajectory>& tracks, double range, FieldOfView mode,
                        Raster& out, std::vector<double>& miss, std::vector<char>& seen,
                        std::vector<std::size_t>& touched) {
  const double dt = common_dt(tracks);
  std::size_t n_steps = 0;
  for (const auto& t : tracks) n_steps = std::max(n_steps, t.size());
  for (std::size_t k = 0; k < n_steps; ++k) {
    for (const auto& t : tracks) {
      if (k >= t.size()) continue;
      for_cells_in_view(out.grid(), t.positions[k], range, mode, [&](std::size_t cell, double w) {
        if (!seen[cell]) {
          seen[cell] = 1;
          touched.push_back(cell);
        }
        miss[cell] *= 1.0 - std::min(w, 1.0);
      });
    }
    for (std::size_t cell : touched) {
      out[cell] += (1.0 - miss[cell]) * dt;
      miss[cell] = 1.0;
      seen[cell] = 0;
    }
    touched.clear();
  }
}

}  // namespace

EffortField path_integral_effort(const std::vector<Trajectory>& tracks, const Grid& grid,
                                 double range, FieldOfView mode) {
  check_range(range);
  EffortField f{Raster(grid, 0.0), {range, "path-integral/" + mode_name(mode)}};
  accumulate_path_integral(tracks, range, mode, f.raster);
  return f;
}

EffortField overlap_corrected_effort(const std::vector<Trajectory>& tracks, const Grid& grid,
                                     double range, FieldOfView mode) {
  check_range(range);
  EffortField f{Raster(grid, 0.0), {range, "overlap/" + mode_name(mode)}};
  std::vector<double> miss(grid.size(), 1.0);
  std::vector<char> seen(grid.size(), 0);
  std::vector<std::size_t> touched;
  accumulate_overlap(tracks, range, mode, f.raster, miss, seen, touched);
  return f;
}

EffortField path_integral_effort(const EncounterDataset& ds, const Grid& grid, double range,
                                 FieldOfView mode) {
  check_range(range);
  EffortField f{Raster(grid, 0.0), {range, "path-integral/" + mode_name(mode)}};
  for (const auto& trip : ds.trips) accumulate_path_integral(trip.tracks, range, mode, f.raster);
  return f;
}

EffortField overlap_corrected_effort(const EncounterDataset& ds, const Grid& grid, double range,
                                     FieldOfView mode) {
  check_range(range);
  EffortField f{Raster(grid, 0.0), {range, "overlap/" + mode_name(mode)}};
  std::vector<double> miss(grid.size(), 1.0);
  std::vector<char> seen(grid.size(), 0);
  std::vector<std::size_t> touched;
  for (const auto& trip : ds.trips) accumulate_overlap(trip.tracks, range, mode, f.raster, miss, seen, touched);
  return f;
}

Trajectory regularize_track(const std::vector<TimedFix>& fixes, double interval) {
  if (fixes.size() < 2) throw InvalidArgument("regularize_track: need at least two fixes");
  if (!(interval > 0.0)) throw InvalidArgument("regularize_track: interval must be positive");
  for (std::size_t i = 1; i < fixes.size(); ++i)
    if (!(fixes[i].time > fixes[i - 1].time))
      throw InvalidArgument("regularize_track: fix times must be strictly increasing");
  const double t0 = fixes.front().time;
  const double span = fixes.back().time - t0;
  const auto n = static_cast<std::size_t>(std::floor(span / interval + 1e-9)) + 1;
  Trajectory out;
  out.dt = interval;
  out.positions.reserve(n);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = std::min(t0 + static_cast<double>(k) * interval, fixes.back().time);
    while (seg + 2 < fixes.size() && fixes[seg + 1].time < t) ++seg;
    const TimedFix& a = fixes[seg];
    const TimedFix& b = fixes[seg + 1];
    const double w = (t - a.time) / (b.time - a.time);
    out.positions.push_back({a.position.x + w * (b.position.x - a.position.x),
                             a.position.y + w * (b.position.y - a.position.y)});
  }
  return out;
}

EffortField bin_track_effort(const Trajectory& traj, const Grid& grid) {
  EffortField f{Raster(grid, 0.0), {0.0, "binned"}};
  for (const Point& p : traj.positions) f.raster[grid.cell_of(p)] += traj.dt;
  return f;
}

DailyEffortCDF::DailyEffortCDF(std::vector<std::pair<double, double>> knots)
    : knots_(std::move(knots)) {
  if (knots_.size() < 2) throw InvalidArgument("daily effort CDF needs at least two knots");
  if (knots_.front().first != 0.0 || knots_.front().second != 0.0)
    throw InvalidArgument("daily effort CDF must start at (0, 0)");
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    if (!(knots_[i].first > knots_[i - 1].first))
      throw InvalidArgument("daily effort CDF knot times must be strictly increasing");
    if (knots_[i].second < knots_[i - 1].second)
      throw InvalidArgument("daily effort CDF must be nondecreasing");
  }
  if (std::abs(knots_.back().second - 1.0) > 1e-12)
    throw InvalidArgument("daily effort CDF must reach 1 at the end of the day");
  knots_.back().second = 1.0;
}

DailyEffortCDF DailyEffortCDF::uniform(double day_length) {
  if (!(day_length > 0.0)) throw InvalidArgument("day length must be positive");
  return DailyEffortCDF({{0.0, 0.0}, {day_length, 1.0}});
}

double daily_fraction(const DailyEffortCDF& cdf, double tau) {
  const auto& k = cdf.knots();
  if (k.empty()) throw InvalidArgument("daily_fraction: empty CDF");
  if (!(tau >= 0.0 && tau <= cdf.day_length()))
    throw InvalidArgument("daily_fraction: tau outside [0, day length]");
  auto it = std::upper_bound(k.begin(), k.end(), tau,
                             [](double t, const auto& knot) { return t < knot.first; });
  if (it == k.end()) return 1.0;
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double w = (tau - lo.first) / (hi.first - lo.first);
  return lo.second + w * (hi.second - lo.second);
}

double fraction_sum(const DailyEffortCDF& cdf, const std::vector<double>& taus) {
  double s = 0.0;
  for (double t : taus) s += daily_fraction(cdf, t);
  return s;
}

double mean_daily_fraction(const DailyEffortCDF& cdf, const std::vector<double>& taus) {
  if (taus.empty()) throw InvalidArgument("mean_daily_fraction: no days");
  return fraction_sum(cdf, taus) / static_cast<double>(taus.size());
}

DailyEffortCDF read_daily_cdf_json(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("daily CDF JSON: ") + e.what());
  }
  if (!j.is_array()) throw IoError("daily CDF JSON: expected an array of knots");
  std::vector<std::pair<double, double>> knots;
  for (const auto& k : j) {
    if (!k.contains("tau_hours") || !k.contains("fraction"))
      throw IoError("daily CDF JSON: knots need tau_hours and fraction");
    knots.emplace_back(k.at("tau_hours").get<double>(), k.at("fraction").get<double>());
  }
  return DailyEffortCDF(std::move(knots));
}

void write_daily_cdf_json(std::ostream& out, const DailyEffortCDF& cdf) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& [t, f] : cdf.knots()) j.push_back({{"tau_hours", t}, {"fraction", f}});
  out << j.dump(2) << '\n';
}

EffortField scale_effort(const EffortField& base, double fraction_sum) {
  if (!(fraction_sum >= 0.0) || !std::isfinite(fraction_sum))
    throw InvalidArgument("scale_effort: fraction sum must be finite and >= 0");
  EffortField out = base;
  for (double& v : out.raster.values()) v *= fraction_sum;
  out.meta.correction = "scaled";
  return out;
}

EffortField combine_effort(const std::vector<EffortField>& fields) {
  if (fields.empty()) throw InvalidArgument("combine_effort: no fields");
  EffortField out = fields.front();
  for (std::size_t k = 1; k < fields.size(); ++k) {
    if (!(fields[k].grid() == out.grid()))
      throw InvalidArgument("combine_effort: effort fields are on different grids");
    for (std::size_t i = 0; i < out.raster.size(); ++i) out.raster[i] += fields[k].raster[i];
  }
  out.meta.correction = "combined";
  return out;
}

EffortEnsemble mc_effort_ensemble(const EffortSampler& generator, std::size_t G,
                                  std::uint64_t seed) {
  if (G < 1) throw InvalidArgument("mc_effort_ensemble: G must be >= 1");
  EffortEnsemble e;
  e.members.reserve(G);
  for (std::size_t g = 0; g < G; ++g) {
    Rng rng(derive_seed(seed, g));
    e.members.push_back(generator(rng));
    if (!(e.members.back().grid() == e.members.front().grid()))
      throw InvalidArgument("mc_effort_ensemble: members must share one grid");
  }
  return e;
}

Raster log_effort_offset(const EffortField& effort) {
  Raster r(effort.grid());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double v = effort.raster[i];
    if (v < 0.0) throw DataInconsistency("negative effort in cell " + std::to_string(i));
    r[i] = v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity();
  }
  return r;
}

double parse_iso8601_hours(const std::string& text) {
  int Y = 0, M = 0, D = 0, h = 0, m = 0;
  double s = 0.0;
  char sep = 0;
  int consumed = 0;
  if (std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d:%lf%n", &Y, &M, &D, &sep, &h, &m, &s,
                  &consumed) < 7 ||
      (sep != 'T' && sep != ' '))
    throw IoError("cannot parse ISO 8601 timestamp '" + text + "'");
  using namespace std::chrono;
  const year_month_day ymd{year{Y}, month{static_cast<unsigned>(M)},
                           day{static_cast<unsigned>(D)}};
  if (!ymd.ok()) throw IoError("invalid calendar date in '" + text + "'");
  const double days = static_cast<double>(sys_days{ymd}.time_since_epoch().count());
  double hours = days * 24.0 + h + m / 60.0 + s / 3600.0;
  std::string zone = text.substr(static_cast<std::size_t>(consumed));
  while (!zone.empty() && (zone.back() == '\r' || zone.back() == ' ')) zone.pop_back();
  if (!zone.empty() && zone != "Z") {
    int zh = 0, zm = 0;
    char sign = 0;
    if (std::sscanf(zone.c_str(), "%c%2d:%2d", &sign, &zh, &zm) != 3 || (sign != '+' && sign != '-'))
      throw IoError("cannot parse time zone in '" + text + "'");
    const double off = zh + zm / 60.0;
    hours -= sign == '+' ? off : -off;
  }
  return hours;
}

std::map<std::string, std::vector<TimedFix>> read_gps_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("observer,timestamp_iso8601,x,y", 0) != 0)
    throw IoError("GPS CSV: expected header 'observer,timestamp_iso8601,x,y'");
  std::map<std::string, std::vector<TimedFix>> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::istringstream ss(line);
    std::string obs, ts, x, y;
    const std::string ctx = "GPS CSV line " + std::to_string(line_no);
    if (!std::getline(ss, obs, ',') || !std::getline(ss, ts, ',') || !std::getline(ss, x, ',') ||
        !std::getline(ss, y))
      throw IoError(ctx + ": expected 4 fields");
    out[obs].push_back({parse_iso8601_hours(ts), {parse_double(x, ctx), parse_double(y, ctx)}});
  }
  for (auto& [obs, fixes] : out)
    std::stable_sort(fixes.begin(), fixes.end(),
                     [](const TimedFix& a, const TimedFix& b) { return a.time < b.time; });
  return out;
}

}  // namespace udfit
