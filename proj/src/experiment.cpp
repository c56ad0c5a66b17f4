#include "udfit/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "udfit/errors.hpp"
#include "udfit/ppm.hpp"

namespace udfit {

using nlohmann::json;

void ExperimentConfig::validate() const {
  region.validate();
  if (nx < 1 || ny < 1) throw ConfigError("grid: nx and ny must be >= 1");
  animal.validate();
  observer_potential.validate();
  if (!(observer_bm_variance > 0.0)) throw ConfigError("observers: bm_variance must be positive");
  if (n_mobile + n_static < 1) throw ConfigError("observers: at least one observer is required");
  if (!(true_detection_range > 0.0)) throw ConfigError("observers: detection_range must be positive");
  if (!(assumed_detection_range > 0.0))
    throw ConfigError("analyst: detection_range must be positive");
  if (n_trips < 1) throw ConfigError("n_trips must be >= 1");
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
  if (replicates < 1) throw ConfigError("replicates must be >= 1");
}

std::vector<ObserverSpec> ExperimentConfig::observers() const {
  MovementSpec move{observer_potential, observer_bm_variance, animal.dt, animal.scaling};
  std::vector<ObserverSpec> obs;
  for (std::size_t i = 0; i < n_static; ++i)
    obs.push_back({ObserverKind::kStatic, move, true_detection_range, true_detection_mode});
  for (std::size_t i = 0; i < n_mobile; ++i)
    obs.push_back({ObserverKind::kMobile, move, true_detection_range, true_detection_mode});
  return obs;
}

Grid ExperimentConfig::grid() const { return Grid(region, nx, ny); }

namespace {

std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

// Line of the first occurrence of "key" in the document, for messages.
std::string anchor(const std::string& text, const std::string& key) {
  const auto pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return "config";
  return "config line " + std::to_string(line_col(text, pos + 1).first);
}

PotentialSpec parse_potential(const json& j, const std::string& text, const std::string& key) {
  const std::string kind = j.value("kind", std::string("bivariate-normal"));
  const double var = j.value("variance", 100.0);
  if (kind == "bivariate-normal") {
    const auto c = j.value("center", std::vector<double>{50.0, 50.0});
    if (c.size() != 2) throw ConfigError(anchor(text, key) + ": center needs two coordinates");
    return PotentialSpec::bivariate_normal({c[0], c[1]}, var);
  }
  if (kind == "half-normal-y") return PotentialSpec::half_normal_y(j.value("center_y", 100.0), var);
  if (kind == "flat") return PotentialSpec::flat();
  throw ConfigError(anchor(text, key) + ": unknown potential kind '" + kind + "'");
}

json potential_json(const PotentialSpec& p) {
  switch (p.kind) {
    case PotentialKind::kBivariateNormal:
      return {{"kind", "bivariate-normal"}, {"center", {p.center.x, p.center.y}}, {"variance", p.variance}};
    case PotentialKind::kHalfNormalY:
      return {{"kind", "half-normal-y"}, {"center_y", p.center.y}, {"variance", p.variance}};
    case PotentialKind::kCustomLogDensity:
      return {{"kind", "flat"}};
  }
  return {};
}

std::size_t nonneg_count(const json& j, const char* key, std::size_t def, const std::string& text) {
  if (!j.contains(key)) return def;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError(anchor(text, key) + ": '" + key + "' must be a nonnegative integer");
  return v.get<std::size_t>();
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_col(text, e.byte);
    throw ConfigError("config line " + std::to_string(line) + ", column " + std::to_string(col) +
                      ": malformed JSON");
  }
  if (!j.is_object()) throw ConfigError("config line 1: expected a JSON object");
  ExperimentConfig c;
  try {
    c.setting = j.value("setting", c.setting);
    if (j.contains("region")) {
      const auto& r = j.at("region");
      c.region = {r.value("xmin", 0.0), r.value("xmax", 100.0), r.value("ymin", 0.0),
                  r.value("ymax", 100.0)};
    }
    if (j.contains("grid")) {
      c.nx = nonneg_count(j.at("grid"), "nx", c.nx, text);
      c.ny = nonneg_count(j.at("grid"), "ny", c.ny, text);
    }
    if (j.contains("drift_scaling")) {
      const auto s = j.at("drift_scaling").get<std::string>();
      if (s == "gradient")
        c.animal.scaling = DriftScaling::kGradient;
      else if (s == "langevin")
        c.animal.scaling = DriftScaling::kLangevin;
      else
        throw ConfigError(anchor(text, "drift_scaling") + ": expected 'gradient' or 'langevin'");
    }
    if (j.contains("animal")) {
      const auto& a = j.at("animal");
      if (a.contains("potential")) c.animal.potential = parse_potential(a.at("potential"), text, "animal");
      c.animal.bm_variance = a.value("bm_variance", c.animal.bm_variance);
      c.animal.dt = a.value("dt", c.animal.dt);
    }
    if (j.contains("observers")) {
      const auto& o = j.at("observers");
      c.n_mobile = nonneg_count(o, "mobile", c.n_mobile, text);
      c.n_static = nonneg_count(o, "static", c.n_static, text);
      if (o.contains("potential"))
        c.observer_potential = parse_potential(o.at("potential"), text, "observers");
      if (o.contains("bias")) {
        const auto b = o.at("bias").get<std::string>();
        if (b == "high")
          c.observer_bm_variance = 2.0;
        else if (b == "low")
          c.observer_bm_variance = 8.0;
        else
          throw ConfigError(anchor(text, "bias") + ": bias must be 'high' or 'low'");
      }
      c.observer_bm_variance = o.value("bm_variance", c.observer_bm_variance);
      c.true_detection_range = o.value("detection_range", c.true_detection_range);
      if (o.contains("detection_mode")) {
        const auto m = o.at("detection_mode").get<std::string>();
        if (m == "linear-decay")
          c.true_detection_mode = DetectionMode::kLinearDecay;
        else if (m == "uniform")
          c.true_detection_mode = DetectionMode::kUniform;
        else
          throw ConfigError(anchor(text, "detection_mode") + ": expected 'linear-decay' or 'uniform'");
      }
    }
    c.n_trips = nonneg_count(j, "n_trips", c.n_trips, text);
    c.max_steps = nonneg_count(j, "max_steps", c.max_steps, text);
    if (j.contains("analyst")) {
      const auto& a = j.at("analyst");
      c.assumed_detection_range = a.value("detection_range", c.assumed_detection_range);
      c.detection_modeled = a.value("detection_modeled", c.detection_modeled);
      c.overlap_correction = a.value("overlap_correction", c.overlap_correction);
      if (a.contains("correction")) {
        const auto m = a.at("correction").get<std::string>();
        if (m == "overlap")
          c.overlap_correction = true;
        else if (m == "path-integral" || m == "none")
          c.overlap_correction = false;
        else
          throw ConfigError(anchor(text, "correction") +
                            ": expected 'none', 'path-integral' or 'overlap'");
      }
      if (a.contains("zero_effort")) {
        const auto z = a.at("zero_effort").get<std::string>();
        if (z == "floor")
          c.zero_effort = ZeroEffortPolicy::kFloor;
        else if (z == "drop")
          c.zero_effort = ZeroEffortPolicy::kDrop;
        else
          throw ConfigError(anchor(text, "zero_effort") + ": expected 'floor' or 'drop'");
      }
    }
    c.replicates = nonneg_count(j, "replicates", c.replicates, text);
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  try {
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig read_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

json to_json(const ExperimentConfig& c) {
  return {
      {"setting", c.setting},
      {"region", {{"xmin", c.region.xmin}, {"xmax", c.region.xmax}, {"ymin", c.region.ymin}, {"ymax", c.region.ymax}}},
      {"grid", {{"nx", c.nx}, {"ny", c.ny}}},
      {"drift_scaling", c.animal.scaling == DriftScaling::kGradient ? "gradient" : "langevin"},
      {"animal", {{"potential", potential_json(c.animal.potential)}, {"bm_variance", c.animal.bm_variance}, {"dt", c.animal.dt}}},
      {"observers",
       {{"mobile", c.n_mobile},
        {"static", c.n_static},
        {"potential", potential_json(c.observer_potential)},
        {"bm_variance", c.observer_bm_variance},
        {"detection_range", c.true_detection_range},
        {"detection_mode", c.true_detection_mode == DetectionMode::kLinearDecay ? "linear-decay" : "uniform"}}},
      {"n_trips", c.n_trips},
      {"max_steps", c.max_steps},
      {"analyst",
       {{"detection_range", c.assumed_detection_range},
        {"detection_modeled", c.detection_modeled},
        {"overlap_correction", c.overlap_correction},
        {"zero_effort", c.zero_effort == ZeroEffortPolicy::kFloor ? "floor" : "drop"}}},
      {"replicates", c.replicates},
      {"seed", c.seed},
  };
}

EncounterDataset simulate_replicate(const ExperimentConfig& cfg, std::size_t replicate) {
  cfg.validate();
  return run_study(cfg.animal, cfg.observers(), cfg.n_trips, cfg.max_steps, cfg.region,
                   cfg.replicate_seed(replicate));
}

namespace {

ModelOutcome fit_outcome(const ExperimentConfig& cfg, const Grid& grid, const std::vector<Point>& points,
                         const std::optional<EffortField>& effort, const UDRaster& truth) {
  ModelOutcome out;
  try {
    IntensityModel model;
    model.grid = grid;
    model.env = quadratic_covariates(grid);
    model.names = {"intercept", "x", "y", "x2", "y2", "xy"};
    std::vector<Point> kept;
    if (effort && cfg.zero_effort == ZeroEffortPolicy::kFloor) {
      EffortField lifted = *effort;
      double floor = std::numeric_limits<double>::infinity();
      for (double v : lifted.raster.values())
        if (v > 0.0) floor = std::min(floor, v);
      if (!std::isfinite(floor)) throw DataInconsistency("effort is zero everywhere");
      for (double& v : lifted.raster.values()) {
        if (v <= 0.0) {
          v = floor;
          ++out.floored_cells;
        }
      }
      model.log_effort_offset = log_effort_offset(lifted);
      kept = points;
    } else if (effort) {
      model.log_effort_offset = log_effort_offset(*effort);
      for (const Point& p : points) {
        if (effort->raster[grid.cell_of(p)] > 0.0)
          kept.push_back(p);
        else
          ++out.dropped_points;
      }
    } else {
      kept = points;
    }
    if (kept.empty()) throw DataInconsistency("no encounters to fit");
    const FitResult fit = fit_mle(model, LikelihoodData::point_pattern(kept, grid));
    if (!fit.converged) throw NumericalFailure("fit did not converge: " + fit.message);
    // Too few encounters for six coefficients: the optimiser stops on a ridge
    // and the reported point is arbitrary.
    if (fit.singular) throw NumericalFailure("information matrix singular; MLE not identified");
    const UDRaster est = normalize_ud(predict_intensity(fit, model));
    out.mspe = mspe(est, truth);
    out.bias = ud_center_bias(fit, cfg.animal.potential.center.y);
    if (!out.bias) out.error = "fitted quadratic has no interior maximum";
  } catch (const Error& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace

ReplicateMetrics analyse_replicate(const ExperimentConfig& cfg, std::size_t replicate,
                                   const EncounterDataset& ds) {
  const Grid grid = cfg.grid();
  const UDRaster truth{analytic_ud(stationary_potential(cfg.animal), grid)};
  const std::vector<Point> points = ds.encounter_points();
  const FieldOfView fov = cfg.detection_modeled ? FieldOfView::kDetectionWeighted : FieldOfView::kIndicator;

  ReplicateMetrics m;
  m.replicate = replicate;
  m.setting = cfg.setting;
  m.seed = cfg.replicate_seed(replicate);
  m.n_encounters = points.size();
  m.uncorrected = fit_outcome(cfg, grid, points, std::nullopt, truth);
  m.corrected = fit_outcome(cfg, grid, points,
                            path_integral_effort(ds, grid, cfg.assumed_detection_range, fov), truth);
  if (cfg.overlap_correction)
    m.overlap = fit_outcome(cfg, grid, points,
                            overlap_corrected_effort(ds, grid, cfg.assumed_detection_range, fov), truth);
  return m;
}

ReplicateMetrics run_replicate(const ExperimentConfig& cfg, std::size_t replicate) {
  return analyse_replicate(cfg, replicate, simulate_replicate(cfg, replicate));
}

std::size_t worker_count_from_env() {
  if (const char* env = std::getenv("UDFIT_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t workers) {
  cfg.validate();
  if (workers == 0) workers = worker_count_from_env();
  workers = std::min(workers, cfg.replicates);
  ExperimentResult res;
  res.config = cfg;
  res.replicates.resize(cfg.replicates);
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::string first_error;
  auto work = [&] {
    for (std::size_t r = next++; r < cfg.replicates; r = next++) {
      try {
        res.replicates[r] = run_replicate(cfg, r);
      } catch (const std::exception& e) {
        ReplicateMetrics m;
        m.replicate = r;
        m.setting = cfg.setting;
        m.seed = cfg.replicate_seed(r);
        m.uncorrected.error = m.corrected.error = e.what();
        res.replicates[r] = m;
        std::lock_guard lock(err_mu);
        if (first_error.empty()) first_error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  res.summary = summarise(cfg.setting, res.replicates);
  return res;
}

namespace {

MetricSummary summarise_metric(const std::vector<ReplicateMetrics>& reps,
                               std::optional<double> (*get)(const ReplicateMetrics&)) {
  std::vector<double> v;
  for (const auto& r : reps)
    if (auto x = get(r)) v.push_back(*x);
  MetricSummary s;
  s.n = v.size();
  if (v.size() >= 2) s.interval = robust_interval(v);
  return s;
}

std::optional<double> opt_or_null(const std::optional<ModelOutcome>& o, bool want_mspe) {
  if (!o) return std::nullopt;
  return want_mspe ? o->mspe : o->bias;
}

}  // namespace

ExperimentSummary summarise(const std::string& setting, const std::vector<ReplicateMetrics>& reps) {
  ExperimentSummary s;
  s.setting = setting;
  s.mspe_uncorrected = summarise_metric(reps, [](const ReplicateMetrics& r) { return r.uncorrected.mspe; });
  s.mspe_corrected = summarise_metric(reps, [](const ReplicateMetrics& r) { return r.corrected.mspe; });
  s.mspe_overlap = summarise_metric(reps, [](const ReplicateMetrics& r) { return opt_or_null(r.overlap, true); });
  s.bias_uncorrected = summarise_metric(reps, [](const ReplicateMetrics& r) { return r.uncorrected.bias; });
  s.bias_corrected = summarise_metric(reps, [](const ReplicateMetrics& r) { return r.corrected.bias; });
  s.bias_overlap = summarise_metric(reps, [](const ReplicateMetrics& r) { return opt_or_null(r.overlap, false); });
  return s;
}

namespace {

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json outcome_json(const ModelOutcome& o) {
  json j = {{"mspe", opt_json(o.mspe)},
            {"bias", opt_json(o.bias)},
            {"dropped_points", o.dropped_points},
            {"floored_cells", o.floored_cells}};
  if (!o.error.empty()) j["error"] = o.error;
  return j;
}

json metric_json(const MetricSummary& m) {
  json j = {{"n", m.n}};
  if (m.interval) {
    j["median"] = m.interval->median;
    j["mad"] = m.interval->mad;
    j["lo"] = m.interval->lo;
    j["hi"] = m.interval->hi;
  }
  return j;
}

}  // namespace

json to_json(const ReplicateMetrics& m) {
  json j = {
      {"replicate", m.replicate},
      {"setting", m.setting},
      {"seed", m.seed},
      {"n_encounters", m.n_encounters},
      {"mspe_corrected", opt_json(m.corrected.mspe)},
      {"mspe_uncorrected", opt_json(m.uncorrected.mspe)},
      {"bias_corrected", opt_json(m.corrected.bias)},
      {"bias_uncorrected", opt_json(m.uncorrected.bias)},
      {"corrected", outcome_json(m.corrected)},
      {"uncorrected", outcome_json(m.uncorrected)},
  };
  if (m.overlap) {
    j["mspe_overlap"] = opt_json(m.overlap->mspe);
    j["bias_overlap"] = opt_json(m.overlap->bias);
    j["overlap"] = outcome_json(*m.overlap);
  }
  return j;
}

json to_json(const ExperimentSummary& s) {
  return {{"setting", s.setting},
          {"mspe_uncorrected", metric_json(s.mspe_uncorrected)},
          {"mspe_corrected", metric_json(s.mspe_corrected)},
          {"mspe_overlap", metric_json(s.mspe_overlap)},
          {"bias_uncorrected", metric_json(s.bias_uncorrected)},
          {"bias_corrected", metric_json(s.bias_corrected)},
          {"bias_overlap", metric_json(s.bias_overlap)}};
}

json to_json(const ExperimentResult& r) {
  json reps = json::array();
  for (const auto& m : r.replicates) reps.push_back(to_json(m));
  return {{"config", to_json(r.config)}, {"replicates", reps}, {"summary", to_json(r.summary)}};
}

void write_summary_table(std::ostream& out, const ExperimentSummary& s) {
  const auto row = [&](const char* label, const MetricSummary& m) {
    char buf[160];
    if (m.interval)
      std::snprintf(buf, sizeof buf, "%-18s n=%-4zu median=% .6e  interval=[% .6e, % .6e]\n", label, m.n,
                    m.interval->median, m.interval->lo, m.interval->hi);
    else
      std::snprintf(buf, sizeof buf, "%-18s n=%-4zu (too few values)\n", label, m.n);
    out << buf;
  };
  out << "setting: " << s.setting << '\n';
  row("mspe uncorrected", s.mspe_uncorrected);
  row("mspe corrected", s.mspe_corrected);
  if (s.mspe_overlap.n) row("mspe overlap", s.mspe_overlap);
  row("bias uncorrected", s.bias_uncorrected);
  row("bias corrected", s.bias_corrected);
  if (s.bias_overlap.n) row("bias overlap", s.bias_overlap);
}

}  // namespace udfit
