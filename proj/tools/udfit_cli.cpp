// udfit: simulate encounter studies, build effort surfaces, fit and map
// effort-corrected point-process models of animal space use.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "udfit/effort.hpp"
#include "udfit/encounter.hpp"
#include "udfit/errors.hpp"
#include "udfit/experiment.hpp"
#include "udfit/ppm.hpp"
#include "udfit/raster_io.hpp"
#include "udfit/ud.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace udfit;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kConfig:
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kUnsupported:
    case ErrorKind::kDegenerateSpec:
      return kExitConfig;
    case ErrorKind::kOutOfDomain:
    case ErrorKind::kMissingData:
    case ErrorKind::kDataInconsistency:
    case ErrorKind::kIo:
      return kExitData;
    case ErrorKind::kUndefinedProbability:
    case ErrorKind::kNumericalFailure:
      return kExitNumerical;
  }
  return 1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

json parse_json_file(const std::string& path) {
  const std::string text = slurp(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < text.size() && i + 1 < e.byte; ++i)
      if (text[i] == '\n') ++line;
    throw ConfigError(path + " line " + std::to_string(line) + ": malformed JSON");
  }
}

ExperimentConfig load_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
  ExperimentConfig cfg;
  try {
    cfg = parse_experiment_config(slurp(path));
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  if (seed) cfg.seed = *seed;
  return cfg;
}

// ---- model specification -------------------------------------------------
//
// {
//   "region": {"xmin":0,"xmax":100,"ymin":0,"ymax":100}, "grid": {"nx":100,"ny":100},
//   "env": "quadratic" | ["cov1.csv", ...],
//   "detection": ["d1.csv", ...], "effort_covariates": ["e1.csv", ...],
//   "effort": "effort.csv",
//   "data": {"kind": "points" | "counts" | "presence", "path": "..."}
// }
// Relative paths resolve against the directory of the model file.

struct ModelSpec {
  IntensityModel model;
  json data;
  fs::path base;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::vector<Raster> load_rasters(const json& list, const fs::path& base, const Grid& grid,
                                 const char* what) {
  std::vector<Raster> out;
  if (list.is_null()) return out;
  if (!list.is_array()) throw ConfigError(std::string("model: '") + what + "' must be a list of files");
  for (const auto& item : list) {
    Raster r = read_raster(resolve(base, item.get<std::string>()).string(), grid);
    if (!(r.grid() == grid))
      throw DataInconsistency(std::string("model: ") + what + " raster '" + item.get<std::string>() +
                              "' is on a different grid");
    out.push_back(std::move(r));
  }
  return out;
}

ModelSpec load_model(const std::string& path) {
  const json j = parse_json_file(path);
  ModelSpec spec;
  spec.base = fs::path(path).parent_path();
  try {
    const json r = j.value("region", json::object());
    const StudyRegion region{r.value("xmin", 0.0), r.value("xmax", 100.0), r.value("ymin", 0.0),
                             r.value("ymax", 100.0)};
    const json g = j.value("grid", json::object());
    const Grid grid = build_grid(region, g.value("nx", 100L), g.value("ny", 100L));
    IntensityModel& m = spec.model;
    m.grid = grid;
    const json env = j.value("env", json("quadratic"));
    if (env.is_string() && env.get<std::string>() == "quadratic") {
      m.env = quadratic_covariates(grid);
      m.names = {"intercept", "x", "y", "x2", "y2", "xy"};
    } else {
      m.env = load_rasters(env, spec.base, grid, "env");
      for (std::size_t k = 0; k < m.env.size(); ++k) m.names.push_back("beta" + std::to_string(k));
    }
    m.detection = load_rasters(j.value("detection", json()), spec.base, grid, "detection");
    for (std::size_t k = 0; k < m.detection.size(); ++k) m.names.push_back("gamma1_" + std::to_string(k));
    m.effort = load_rasters(j.value("effort_covariates", json()), spec.base, grid, "effort_covariates");
    for (std::size_t k = 0; k < m.effort.size(); ++k) m.names.push_back("gamma2_" + std::to_string(k));
    if (j.contains("effort")) {
      EffortField field;
      field.raster = read_raster(resolve(spec.base, j.at("effort").get<std::string>()).string(), grid);
      if (!(field.raster.grid() == grid)) throw DataInconsistency("model: effort raster is on a different grid");
      m.log_effort_offset = log_effort_offset(field);
    }
    spec.data = j.value("data", json());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  spec.model.validate();
  return spec;
}

std::vector<Point> read_points_csv(const std::string& path) {
  std::istringstream in(slurp(path));
  std::string line;
  if (!std::getline(in, line)) throw DataInconsistency(path + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream hs(line);
    std::string f;
    while (std::getline(hs, f, ',')) header.push_back(f);
  }
  const auto col = [&](const char* name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataInconsistency(path + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t cx = col("x"), cy = col("y");
  std::vector<Point> pts;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string v;
    while (std::getline(ls, v, ',')) f.push_back(v);
    if (f.size() <= std::max(cx, cy))
      throw DataInconsistency(path + " line " + std::to_string(lineno) + ": too few fields");
    const std::string ctx = path + " line " + std::to_string(lineno);
    pts.push_back({parse_double(f[cx], ctx), parse_double(f[cy], ctx)});
  }
  return pts;
}

LikelihoodData load_data(const ModelSpec& spec) {
  if (!spec.data.is_object()) throw ConfigError("model: 'data' section is required for fitting");
  const std::string kind = spec.data.value("kind", std::string("points"));
  const std::string path = resolve(spec.base, spec.data.value("path", std::string())).string();
  const Grid& grid = spec.model.grid;
  if (kind == "points") return LikelihoodData::point_pattern(read_points_csv(path), grid);
  if (kind == "counts" || kind == "presence") {
    const Raster r = read_raster(path, grid);
    if (!(r.grid() == grid)) throw DataInconsistency("model: data raster is on a different grid");
    std::vector<double> v(r.values().begin(), r.values().end());
    return kind == "counts" ? LikelihoodData::cell_counts(std::move(v), grid)
                            : LikelihoodData::cell_presence(std::move(v), grid);
  }
  throw ConfigError("model: unknown data kind '" + kind + "'");
}

json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json fit_to_json(const FitResult& f) {
  json cov = json::array();
  for (Eigen::Index i = 0; i < f.covariance.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < f.covariance.cols(); ++k) row.push_back(num_or_null(f.covariance(i, k)));
    cov.push_back(row);
  }
  json coef = json::array(), se = json::array();
  for (Eigen::Index i = 0; i < f.coefficients.size(); ++i) {
    coef.push_back(f.coefficients[i]);
    se.push_back(num_or_null(f.std_errors[i]));
  }
  return {{"names", f.names},
          {"coefficients", coef},
          {"std_errors", se},
          {"covariance", cov},
          {"loglik", f.loglik},
          {"gradient_max_norm", f.gradient_max_norm},
          {"iterations", f.iterations},
          {"converged", f.converged},
          {"singular", f.singular},
          {"message", f.message}};
}

FitResult fit_from_json(const json& j) {
  FitResult f;
  try {
    const auto coef = j.at("coefficients").get<std::vector<double>>();
    const auto n = static_cast<Eigen::Index>(coef.size());
    f.coefficients = Eigen::Map<const Eigen::VectorXd>(coef.data(), n);
    f.covariance = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
    const json& cov = j.at("covariance");
    if (static_cast<Eigen::Index>(cov.size()) != n) throw DataInconsistency("fit: covariance has the wrong size");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (static_cast<Eigen::Index>(cov[i].size()) != n)
        throw DataInconsistency("fit: covariance has the wrong size");
      for (Eigen::Index k = 0; k < n; ++k)
        if (!cov[i][k].is_null()) f.covariance(i, k) = cov[i][k].get<double>();
    }
    f.std_errors = f.covariance.diagonal().cwiseSqrt();
    f.names = j.value("names", std::vector<std::string>{});
    f.loglik = j.value("loglik", 0.0);
    f.converged = j.at("converged").get<bool>();
    f.singular = j.value("singular", false);
    f.iterations = j.value("iterations", 0);
    f.message = j.value("message", std::string());
  } catch (const json::exception& e) {
    throw DataInconsistency(std::string("fit: ") + e.what());
  }
  return f;
}

void check_fit_matches(const FitResult& fit, const IntensityModel& model) {
  if (fit.coefficients.size() != static_cast<Eigen::Index>(model.n_parameters()))
    throw DataInconsistency("fit has " + std::to_string(fit.coefficients.size()) +
                            " coefficients but the model has " + std::to_string(model.n_parameters()));
}

// ---- subcommands -----------------------------------------------------------

int cmd_simulate(const std::string& config_path, const std::optional<std::uint64_t>& seed,
                 const std::string& out_dir) {
  const ExperimentConfig cfg = load_config(config_path, seed);
  fs::create_directories(out_dir);
  json manifest = {{"config", to_json(cfg)}, {"replicates", json::array()}};
  for (std::size_t r = 0; r < cfg.replicates; ++r) {
    const EncounterDataset ds = simulate_replicate(cfg, r);
    char stem[32];
    std::snprintf(stem, sizeof stem, "%04zu", r);
    const std::string enc = std::string("encounters_") + stem + ".csv";
    const std::string trk = std::string("tracks_") + stem + ".csv";
    std::ostringstream es, ts;
    write_encounters_csv(es, ds);
    write_tracks_csv(ts, ds);
    write_text((fs::path(out_dir) / enc).string(), es.str());
    write_text((fs::path(out_dir) / trk).string(), ts.str());
    manifest["replicates"].push_back({{"replicate", r},
                                      {"seed", cfg.replicate_seed(r)},
                                      {"n_trips", ds.trips.size()},
                                      {"n_encounters", ds.encounter_count()},
                                      {"encounters", enc},
                                      {"tracks", trk}});
  }
  write_text((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  std::cout << "wrote " << cfg.replicates << " replicate(s) to " << out_dir << "\n";
  return 0;
}

int cmd_effort(const std::string& config_path, const std::string& tracks_path, double range,
               const std::string& mode, bool overlap, const std::string& out_path) {
  const ExperimentConfig cfg = load_config(config_path, std::nullopt);
  FieldOfView fov;
  if (mode == "indicator")
    fov = FieldOfView::kIndicator;
  else if (mode == "detection")
    fov = FieldOfView::kDetectionWeighted;
  else
    throw ConfigError("--mode must be 'indicator' or 'detection'");
  std::istringstream in(slurp(tracks_path));
  const auto rows = read_tracks_csv(in, cfg.animal.dt);
  std::map<std::size_t, std::vector<Trajectory>> by_trip;
  for (const auto& row : rows) by_trip[row.trip].push_back(row.track);
  const Grid grid = cfg.grid();
  EffortField field;
  if (overlap) {
    std::vector<EffortField> parts;
    for (const auto& [trip, tracks] : by_trip)
      parts.push_back(overlap_corrected_effort(tracks, grid, range, fov));
    if (parts.empty()) throw DataInconsistency(tracks_path + ": no tracks");
    field = combine_effort(parts);
    field.meta.correction = "overlap";
  } else {
    std::vector<Trajectory> all;
    for (auto& [trip, tracks] : by_trip) all.insert(all.end(), tracks.begin(), tracks.end());
    field = path_integral_effort(all, grid, range, fov);
  }
  write_raster(out_path, field.raster);
  std::cout << "total effort " << format_double(field.total()) << "\n";
  return 0;
}

int cmd_fit(const std::string& model_path, const std::string& out_path) {
  const ModelSpec spec = load_model(model_path);
  const LikelihoodData data = load_data(spec);
  FitResult fit = fit_mle(spec.model, data);
  if (fit.names.empty()) fit.names = spec.model.names;
  write_text(out_path, fit_to_json(fit).dump(2) + "\n");
  std::cout << (fit.converged ? "converged" : "not converged") << " after " << fit.iterations
            << " iterations, loglik " << format_double(fit.loglik) << "\n";
  if (!fit.converged) {
    std::cerr << "udfit: fit did not converge: " << fit.message << "\n";
    return kExitNumerical;
  }
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& fit_path, bool fix_effort,
                bool fix_detection, bool as_ud, const std::string& out_path) {
  const ModelSpec spec = load_model(model_path);
  const FitResult fit = fit_from_json(parse_json_file(fit_path));
  check_fit_matches(fit, spec.model);
  Raster r = predict_intensity(fit, spec.model, {fix_effort, fix_detection});
  if (as_ud) r = normalize_ud(r).raster;
  write_raster(out_path, r);
  return 0;
}

int cmd_exceed(const std::string& model_path, const std::string& fit_path, double percentile,
               std::optional<double> cutoff, std::size_t samples, std::uint64_t seed,
               const std::string& mode, const std::string& out_path,
               const std::optional<std::string>& masked_path) {
  const ModelSpec spec = load_model(model_path);
  const FitResult fit = fit_from_json(parse_json_file(fit_path));
  check_fit_matches(fit, spec.model);
  ExceedanceOptions opts;
  opts.percentile = percentile;
  opts.n_samples = samples;
  opts.probability_cutoff = cutoff;
  if (mode == "per-draw")
    opts.mode = ThresholdMode::kPerDraw;
  else if (mode == "fixed")
    opts.mode = ThresholdMode::kFixedEstimate;
  else
    throw ConfigError("--threshold must be 'per-draw' or 'fixed'");
  const ExceedanceMap map = exceedance_map(fit, spec.model, opts, seed);
  write_raster(out_path, map.probabilities);
  if (masked_path) {
    if (!map.masked) throw ConfigError("--masked-out needs --cutoff");
    write_raster(*masked_path, *map.masked);
  }
  return 0;
}

int cmd_experiment(const std::string& config_path, const std::optional<std::uint64_t>& seed,
                   std::size_t workers, const std::string& out_path) {
  const ExperimentConfig cfg = load_config(config_path, seed);
  const ExperimentResult res = run_experiment(cfg, workers);
  if (!out_path.empty()) write_text(out_path, to_json(res).dump(2) + "\n");
  write_summary_table(std::cout, res.summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"udfit: effort-corrected utilization distribution estimation"};
  app.require_subcommand(1);

  std::string config, out, model, fit, tracks, mode = "detection", threshold = "per-draw";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> masked;
  std::size_t workers = 0, samples = 1000;
  double range = 10.0, percentile = 70.0;
  std::optional<double> cutoff;
  bool overlap = false, fix_effort = false, fix_detection = false, as_ud = false;

  auto* sim = app.add_subcommand("simulate", "simulate encounter datasets");
  sim->add_option("-c,--config", config, "experiment config (JSON)")->required();
  sim->add_option("--seed", seed, "override the base seed");
  sim->add_option("-o,--out", out, "output directory")->required();

  auto* eff = app.add_subcommand("effort", "effort raster from observer tracks");
  eff->add_option("-c,--config", config, "experiment config giving region and grid")->required();
  eff->add_option("-t,--tracks", tracks, "tracks CSV (trip,observer,step,x,y)")->required();
  eff->add_option("-r,--range", range, "assumed detection range")->check(CLI::PositiveNumber);
  eff->add_option("-m,--mode", mode, "field of view: indicator | detection");
  eff->add_flag("--overlap", overlap, "correct for overlapping fields of view");
  eff->add_option("-o,--out", out, "output raster (.csv or .asc)")->required();

  auto* fitc = app.add_subcommand("fit", "maximum-likelihood fit of a model spec");
  fitc->add_option("-m,--model", model, "model spec (JSON)")->required();
  fitc->add_option("-o,--out", out, "fit JSON")->required();

  auto* pred = app.add_subcommand("predict", "intensity raster from a fit");
  pred->add_option("-m,--model", model, "model spec (JSON)")->required();
  pred->add_option("-f,--fit", fit, "fit JSON")->required();
  pred->add_flag("--fix-effort", fix_effort, "hold the effort block at a constant");
  pred->add_flag("--fix-detection", fix_detection, "hold the detection block at a constant");
  pred->add_flag("--ud", as_ud, "normalise to a utilization distribution");
  pred->add_option("-o,--out", out, "output raster")->required();

  auto* exc = app.add_subcommand("exceed", "exceedance-probability map");
  exc->add_option("-m,--model", model, "model spec (JSON)")->required();
  exc->add_option("-f,--fit", fit, "fit JSON")->required();
  exc->add_option("--percentile", percentile, "intensity percentile to exceed")->check(CLI::Range(0.0, 100.0));
  exc->add_option("--cutoff", cutoff, "probability cutoff for the masked map")->check(CLI::Range(0.0, 1.0));
  exc->add_option("--samples", samples, "number of coefficient draws")->check(CLI::PositiveNumber);
  exc->add_option("--seed", seed, "RNG seed (default 1)");
  exc->add_option("--threshold", threshold, "per-draw | fixed");
  exc->add_option("-o,--out", out, "probability raster")->required();
  exc->add_option("--masked-out", masked, "masked raster (needs --cutoff)");

  auto* exp = app.add_subcommand("experiment", "run a replicated simulation study");
  exp->add_option("-c,--config", config, "experiment config (JSON)")->required();
  exp->add_option("--seed", seed, "override the base seed");
  exp->add_option("-w,--workers", workers, "worker threads (default: UDFIT_WORKERS or all cores)");
  exp->add_option("-o,--out", out, "metrics JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*sim) return cmd_simulate(config, seed, out);
    if (*eff) return cmd_effort(config, tracks, range, mode, overlap, out);
    if (*fitc) return cmd_fit(model, out);
    if (*pred) return cmd_predict(model, fit, fix_effort, fix_detection, as_ud, out);
    if (*exc)
      return cmd_exceed(model, fit, percentile, cutoff, samples, seed.value_or(1), threshold, out, masked);
    if (*exp) return cmd_experiment(config, seed, workers, out);
  } catch (const Error& e) {
    std::cerr << "udfit: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "udfit: " << e.what() << "\n";
    return kExitData;
  }
  return 1;
}
