#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "udfit/geometry.hpp"
#include "udfit/movement.hpp"

namespace udfit {

enum class ObserverKind { kMobile, kStatic };
enum class DetectionMode { kLinearDecay, kUniform };

// Static observers use `movement` only to define the density their fixed
// location is drawn from.
struct ObserverSpec {
  ObserverKind kind = ObserverKind::kMobile;
  MovementSpec movement;
  double detection_range = 10.0;
  DetectionMode detection_mode = DetectionMode::kLinearDecay;

  void validate() const;
};

double detection_prob(double distance, double range, DetectionMode mode);

struct Encounter {
  Point location;        // animal position at the detection step
  std::size_t step = 0;  // 1-based attempt index
  int observer = 0;
  std::optional<int> mark;
};

// Observer tracks hold one position per detection attempt (steps 1..k), so
// the track length equals the encounter step, or max_steps without one.
struct TripRecord {
  std::vector<Trajectory> tracks;
  std::optional<Encounter> encounter;
  std::size_t max_steps = 0;
};

struct EncounterDataset {
  StudyRegion region;
  std::vector<TripRecord> trips;

  std::vector<Point> encounter_points() const;
  std::size_t encounter_count() const;
  // All observer tracks of all trips, in trip then observer order.
  std::vector<Trajectory> all_tracks() const;
};

// splitmix64(splitmix64(base) + index); per-trip and per-draw RNG streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

TripRecord run_trip(const MovementSpec& animal, const std::vector<ObserverSpec>& observers,
                    std::size_t max_steps, const StudyRegion& region, Rng& rng);

// Trip t uses Rng(derive_seed(seed, t)).
EncounterDataset run_study(const MovementSpec& animal, const std::vector<ObserverSpec>& observers,
                           std::size_t n_trips, std::size_t max_steps, const StudyRegion& region,
                           std::uint64_t seed);

// Encounters CSV `trip,step,x,y,mark,observer` (empty mark when absent) and
// tracks CSV `trip,observer,step,x,y`.
void write_encounters_csv(std::ostream& out, const EncounterDataset& ds);
void write_tracks_csv(std::ostream& out, const EncounterDataset& ds);

struct EncounterRow {
  std::size_t trip = 0;
  Encounter encounter;
};
std::vector<EncounterRow> read_encounters_csv(std::istream& in);

struct TrackRow {
  std::size_t trip = 0;
  int observer = 0;
  Trajectory track;
};
std::vector<TrackRow> read_tracks_csv(std::istream& in, double dt = 1.0);

}  // namespace udfit
