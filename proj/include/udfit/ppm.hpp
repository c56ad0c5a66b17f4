#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "udfit/geometry.hpp"

namespace udfit {

// Log-linear intensity on a grid,
//   log eta = beta' x + log g(gamma1' w1) + gamma2' w2 + log_effort_offset,
// with g the logistic function. Covariates are piecewise constant per cell.
// An intercept is an explicit constant raster in `env`. `coefficients` is
// laid out as [beta; gamma1; gamma2].
struct IntensityModel {
  Grid grid;
  std::vector<Raster> env;
  std::vector<Raster> detection;
  std::vector<Raster> effort;
  std::optional<Raster> log_effort_offset;  // -inf marks a zero-effort cell
  std::optional<int> mark;
  std::vector<std::string> names;  // optional, one per coefficient
  Eigen::VectorXd coefficients;

  std::size_t n_env() const { return env.size(); }
  std::size_t n_detection() const { return detection.size(); }
  std::size_t n_effort() const { return effort.size(); }
  std::size_t n_parameters() const { return env.size() + detection.size() + effort.size(); }

  // Shared grid and coefficient count; zero-fills empty coefficients.
  void validate() const;
  IntensityModel with_coefficients(const Eigen::VectorXd& theta) const;
};

enum class DataKind { kPointPattern, kCellCounts, kCellPresence };

// Observations plus Riemann integration weights alpha per cell. Point
// patterns carry locations; the cell kinds carry one value per cell.
struct LikelihoodData {
  DataKind kind = DataKind::kPointPattern;
  std::vector<Point> points;
  std::vector<double> cell_values;
  Raster weights;

  static LikelihoodData point_pattern(std::vector<Point> points, const Grid& grid);
  static LikelihoodData cell_counts(std::vector<double> counts, const Grid& grid);
  static LikelihoodData cell_presence(std::vector<double> indicators, const Grid& grid);

  void validate(const Grid& grid) const;
};

// eta at a cell / at the cell containing a point. Throws MissingData when a
// covariate used by the cell is missing.
double eta(const IntensityModel& model, std::size_t cell);
double eta_at(const IntensityModel& model, const Point& p);

// sum over points log eta(point) - sum over cells alpha_i eta_i. Cells with
// alpha = 0 or zero effort are left out of the integral; a point in such a
// cell throws DataInconsistency.
double riemann_loglik(const IntensityModel& model, const LikelihoodData& data);
// sum_i N_i log(alpha_i eta_i) - alpha_i eta_i - log N_i!
double count_loglik(const IntensityModel& model, const LikelihoodData& data);
// sum_i O_i log(1 - exp(-alpha_i eta_i)) - (1 - O_i) alpha_i eta_i
double presence_loglik(const IntensityModel& model, const LikelihoodData& data);

// Dispatches on data.kind.
double loglik(const IntensityModel& model, const LikelihoodData& data);
Eigen::VectorXd loglik_gradient(const IntensityModel& model, const LikelihoodData& data);
Eigen::MatrixXd loglik_hessian(const IntensityModel& model, const LikelihoodData& data);

// Several datasets whose models draw their coefficients from one global
// parameter vector: component k uses parameters[parameter_map[k][j]] as its
// j-th coefficient. Shared blocks are map entries pointing at the same index.
struct JointComponent {
  IntensityModel model;
  LikelihoodData data;
  std::vector<std::size_t> parameter_map;
};

struct JointModel {
  std::size_t n_parameters = 0;
  std::vector<JointComponent> components;
  std::vector<std::string> names;

  void validate() const;
};

double joint_loglik(const JointModel& jm, const Eigen::VectorXd& theta);
Eigen::VectorXd joint_gradient(const JointModel& jm, const Eigen::VectorXd& theta);
Eigen::MatrixXd joint_hessian(const JointModel& jm, const Eigen::VectorXd& theta);

struct FitOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-8;
  std::optional<Eigen::VectorXd> start;  // zero vector when absent
  // Smallest information eigenvalue, relative to the largest, before the
  // information is treated as singular.
  double singular_tolerance = 1e-10;
};

struct FitResult {
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance;  // NaN-filled when `singular`
  Eigen::VectorXd std_errors;
  std::vector<std::string> names;
  double loglik = 0.0;
  double gradient_max_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  bool singular = false;
  std::string message;
};

FitResult fit_mle(const IntensityModel& model, const LikelihoodData& data,
                  const FitOptions& options = {});
FitResult fit_joint_mle(const JointModel& jm, const FitOptions& options = {});

struct PredictOptions {
  bool fix_effort = true;
  bool fix_detection = true;
};

// exp(beta' x) times the detection and effort factors that are not fixed;
// a fixed block contributes the constant 1. Requires a converged fit.
Raster predict_intensity(const FitResult& fit, const IntensityModel& model,
                         const PredictOptions& options = {});

// Intensity for an arbitrary coefficient vector, same block rules.
Raster intensity_raster(const IntensityModel& model, const Eigen::VectorXd& theta,
                        const PredictOptions& options = {});

}  // namespace udfit
