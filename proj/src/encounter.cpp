#include "udfit/encounter.hpp"

#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "udfit/errors.hpp"
#include "udfit/raster_io.hpp"

namespace udfit {

void ObserverSpec::validate() const {
  movement.validate();
  if (!(detection_range > 0.0)) throw InvalidArgument("detection range must be positive");
}

double detection_prob(double distance, double range, DetectionMode mode) {
  if (!(distance >= 0.0)) throw InvalidArgument("detection_prob: distance must be nonnegative");
  if (!(range > 0.0)) throw InvalidArgument("detection_prob: range must be positive");
  if (mode == DetectionMode::kUniform) return distance <= range ? 1.0 : 0.0;
  return std::max(0.0, 1.0 - distance / range);
}

std::vector<Point> EncounterDataset::encounter_points() const {
  std::vector<Point> pts;
  for (const auto& t : trips)
    if (t.encounter) pts.push_back(t.encounter->location);
  return pts;
}

std::size_t EncounterDataset::encounter_count() const {
  std::size_t n = 0;
  for (const auto& t : trips) n += t.encounter ? 1 : 0;
  return n;
}

std::vector<Trajectory> EncounterDataset::all_tracks() const {
  std::vector<Trajectory> out;
  for (const auto& t : trips) out.insert(out.end(), t.tracks.begin(), t.tracks.end());
  return out;
}

namespace {
std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace

// The base is mixed before the index is added so that (base, i + 1) and
// (base + 1, i) land on unrelated streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(splitmix64(base) + index);
}

TripRecord run_trip(const MovementSpec& animal, const std::vector<ObserverSpec>& observers,
                    std::size_t max_steps, const StudyRegion& region, Rng& rng) {
  if (observers.empty()) throw InvalidArgument("run_trip: at least one observer is required");
  if (max_steps < 1) throw InvalidArgument("run_trip: max_steps must be >= 1");
  animal.validate();
  for (const auto& o : observers) o.validate();

  Point animal_pos = sample_initial(stationary_potential(animal), region, rng);
  std::vector<Point> obs_pos;
  obs_pos.reserve(observers.size());
  for (const auto& o : observers)
    obs_pos.push_back(sample_initial(stationary_potential(o.movement), region, rng));

  TripRecord trip;
  trip.max_steps = max_steps;
  trip.tracks.resize(observers.size());
  for (std::size_t k = 0; k < observers.size(); ++k) {
    trip.tracks[k].entity = static_cast<int>(k);
    trip.tracks[k].dt = observers[k].movement.dt;
    trip.tracks[k].positions.reserve(max_steps);
  }

  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (std::size_t t = 1; t <= max_steps; ++t) {
    animal_pos = step(animal, animal_pos, region, rng);
    for (std::size_t k = 0; k < observers.size(); ++k) {
      if (observers[k].kind == ObserverKind::kMobile)
        obs_pos[k] = step(observers[k].movement, obs_pos[k], region, rng);
      trip.tracks[k].positions.push_back(obs_pos[k]);
    }
    for (std::size_t k = 0; k < observers.size(); ++k) {
      const double p = detection_prob(distance(animal_pos, obs_pos[k]),
                                      observers[k].detection_range, observers[k].detection_mode);
      if (p <= 0.0) continue;
      if (p >= 1.0 || u01(rng) < p) {
        trip.encounter = Encounter{animal_pos, t, static_cast<int>(k), std::nullopt};
        return trip;
      }
    }
  }
  return trip;
}

EncounterDataset run_study(const MovementSpec& animal, const std::vector<ObserverSpec>& observers,
                           std::size_t n_trips, std::size_t max_steps, const StudyRegion& region,
                           std::uint64_t seed) {
  if (n_trips < 1) throw InvalidArgument("run_study: n_trips must be >= 1");
  EncounterDataset ds;
  ds.region = region;
  ds.trips.reserve(n_trips);
  for (std::size_t t = 0; t < n_trips; ++t) {
    Rng rng(derive_seed(seed, t));
    ds.trips.push_back(run_trip(animal, observers, max_steps, region, rng));
  }
  return ds;
}

void write_encounters_csv(std::ostream& out, const EncounterDataset& ds) {
  out << "trip,step,x,y,mark,observer\n";
  for (std::size_t i = 0; i < ds.trips.size(); ++i) {
    const auto& e = ds.trips[i].encounter;
    if (!e) continue;
    out << i << ',' << e->step << ',' << format_double(e->location.x) << ','
        << format_double(e->location.y) << ',';
    if (e->mark) out << *e->mark;
    out << ',' << e->observer << '\n';
  }
}

void write_tracks_csv(std::ostream& out, const EncounterDataset& ds) {
  out << "trip,observer,step,x,y\n";
  for (std::size_t i = 0; i < ds.trips.size(); ++i)
    for (const auto& tr : ds.trips[i].tracks)
      for (std::size_t s = 0; s < tr.positions.size(); ++s)
        out << i << ',' << tr.entity << ',' << s + 1 << ',' << format_double(tr.positions[s].x)
            << ',' << format_double(tr.positions[s].y) << '\n';
}

namespace {

std::vector<std::string> fields_of(const std::string& line) {
  std::vector<std::string> f;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) f.push_back(cur);
  if (!line.empty() && line.back() == ',') f.emplace_back();
  return f;
}

long parse_long(const std::string& s, const std::string& ctx) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size() && s.substr(pos) != "\r") throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(ctx + ": cannot parse integer '" + s + "'");
  }
}

}  // namespace

std::vector<EncounterRow> read_encounters_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("trip,step,x,y,mark,observer", 0) != 0)
    throw IoError("encounters CSV: expected header 'trip,step,x,y,mark,observer'");
  std::vector<EncounterRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = fields_of(line);
    const std::string ctx = "encounters CSV line " + std::to_string(line_no);
    if (f.size() != 6) throw IoError(ctx + ": expected 6 fields");
    EncounterRow r;
    r.trip = static_cast<std::size_t>(parse_long(f[0], ctx));
    r.encounter.step = static_cast<std::size_t>(parse_long(f[1], ctx));
    r.encounter.location = {parse_double(f[2], ctx), parse_double(f[3], ctx)};
    if (!f[4].empty()) r.encounter.mark = static_cast<int>(parse_long(f[4], ctx));
    r.encounter.observer = static_cast<int>(parse_long(f[5], ctx));
    rows.push_back(r);
  }
  return rows;
}

std::vector<TrackRow> read_tracks_csv(std::istream& in, double dt) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("trip,observer,step,x,y", 0) != 0)
    throw IoError("tracks CSV: expected header 'trip,observer,step,x,y'");
  std::map<std::pair<std::size_t, int>, std::map<long, Point>> grouped;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = fields_of(line);
    const std::string ctx = "tracks CSV line " + std::to_string(line_no);
    if (f.size() != 5) throw IoError(ctx + ": expected 5 fields");
    const auto trip = static_cast<std::size_t>(parse_long(f[0], ctx));
    const int obs = static_cast<int>(parse_long(f[1], ctx));
    grouped[{trip, obs}][parse_long(f[2], ctx)] = {parse_double(f[3], ctx),
                                                   parse_double(f[4], ctx)};
  }
  std::vector<TrackRow> out;
  for (auto& [key, steps] : grouped) {
    TrackRow r;
    r.trip = key.first;
    r.observer = key.second;
    r.track.entity = key.second;
    r.track.dt = dt;
    for (auto& [s, p] : steps) r.track.positions.push_back(p);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace udfit
