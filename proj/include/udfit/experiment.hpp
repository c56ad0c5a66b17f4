#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "udfit/effort.hpp"
#include "udfit/encounter.hpp"
#include "udfit/movement.hpp"
#include "udfit/ud.hpp"

namespace udfit {

enum class Correction { kNone, kPathIntegral, kOverlap };

// What the analyst does with encounters that fall in cells the crude effort
// surface says were never observed.
enum class ZeroEffortPolicy {
  kFloor,  // such cells get the smallest positive effort of the field
  kDrop,   // the encounters are discarded before fitting
};

// One simulation-study setting: the data-generating mechanism plus the
// analyst's assumptions about the observers' fields of view.
struct ExperimentConfig {
  std::string setting = "default";
  StudyRegion region{0.0, 100.0, 0.0, 100.0};
  std::size_t nx = 100;
  std::size_t ny = 100;

  MovementSpec animal{PotentialSpec::bivariate_normal({50.0, 50.0}, 100.0), 2.0, 1.0,
                      DriftScaling::kGradient};
  PotentialSpec observer_potential = PotentialSpec::half_normal_y(100.0, 200.0);
  double observer_bm_variance = 2.0;  // 2 = high observer bias, 8 = low
  std::size_t n_mobile = 1;
  std::size_t n_static = 0;
  double true_detection_range = 10.0;
  DetectionMode true_detection_mode = DetectionMode::kLinearDecay;

  std::size_t n_trips = 150;
  std::size_t max_steps = 500;

  double assumed_detection_range = 10.0;
  bool detection_modeled = true;
  bool overlap_correction = false;
  ZeroEffortPolicy zero_effort = ZeroEffortPolicy::kFloor;

  std::size_t replicates = 1;
  std::uint64_t seed = 1;

  void validate() const;
  std::vector<ObserverSpec> observers() const;
  Grid grid() const;
  // Seed of replicate r: seed XOR r.
  std::uint64_t replicate_seed(std::size_t r) const { return seed ^ static_cast<std::uint64_t>(r); }
};

// JSON document <-> config. Parse failures throw ConfigError carrying the
// line and column of the offending text.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig read_experiment_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

struct ModelOutcome {
  std::optional<double> mspe;
  std::optional<double> bias;
  std::size_t dropped_points = 0;  // encounters in zero-effort cells (kDrop)
  std::size_t floored_cells = 0;   // zero-effort cells lifted to the floor (kFloor)
  std::string error;
};

struct ReplicateMetrics {
  std::size_t replicate = 0;
  std::string setting;
  std::uint64_t seed = 0;
  std::size_t n_encounters = 0;
  ModelOutcome uncorrected;
  ModelOutcome corrected;
  std::optional<ModelOutcome> overlap;
};

struct MetricSummary {
  std::size_t n = 0;
  std::optional<RobustInterval> interval;
};

struct ExperimentSummary {
  std::string setting;
  MetricSummary mspe_uncorrected, mspe_corrected, mspe_overlap;
  MetricSummary bias_uncorrected, bias_corrected, bias_overlap;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<ReplicateMetrics> replicates;
  ExperimentSummary summary;
};

EncounterDataset simulate_replicate(const ExperimentConfig& cfg, std::size_t replicate);

// Fits the uncorrected, path-integral corrected and (optionally) overlap
// corrected models to one dataset. Fit failures land in ModelOutcome::error.
ReplicateMetrics analyse_replicate(const ExperimentConfig& cfg, std::size_t replicate,
                                   const EncounterDataset& ds);

ReplicateMetrics run_replicate(const ExperimentConfig& cfg, std::size_t replicate);

// Runs every replicate on `workers` threads (0: UDFIT_WORKERS or the
// hardware concurrency). Results are ordered by replicate index.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t workers = 0);

ExperimentSummary summarise(const std::string& setting, const std::vector<ReplicateMetrics>& reps);

nlohmann::json to_json(const ReplicateMetrics& m);
nlohmann::json to_json(const ExperimentSummary& s);
nlohmann::json to_json(const ExperimentResult& r);
void write_summary_table(std::ostream& out, const ExperimentSummary& s);

std::size_t worker_count_from_env();

}  // namespace udfit
