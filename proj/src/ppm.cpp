#include "udfit/ppm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "udfit/errors.hpp"

namespace udfit {

void IntensityModel::validate() const {
  if (grid.size() == 0) throw InvalidArgument("intensity model has no grid");
  const auto check = [&](const Raster& r, const char* what) {
    if (!(r.grid() == grid)) throw InvalidArgument(std::string(what) + " raster is on a different grid");
  };
  for (const auto& r : env) check(r, "environmental covariate");
  for (const auto& r : detection) check(r, "detection covariate");
  for (const auto& r : effort) check(r, "effort covariate");
  if (log_effort_offset) check(*log_effort_offset, "log-effort offset");
  if (coefficients.size() != 0 && static_cast<std::size_t>(coefficients.size()) != n_parameters())
    throw InvalidArgument("coefficient count " + std::to_string(coefficients.size()) +
                          " does not match covariate count " + std::to_string(n_parameters()));
  if (!names.empty() && names.size() != n_parameters())
    throw InvalidArgument("coefficient name count does not match covariate count");
}

IntensityModel IntensityModel::with_coefficients(const Eigen::VectorXd& theta) const {
  IntensityModel m = *this;
  m.coefficients = theta;
  m.validate();
  return m;
}

LikelihoodData LikelihoodData::point_pattern(std::vector<Point> points, const Grid& grid) {
  LikelihoodData d;
  d.kind = DataKind::kPointPattern;
  d.points = std::move(points);
  d.weights = Raster(grid, grid.cell_area());
  return d;
}

LikelihoodData LikelihoodData::cell_counts(std::vector<double> counts, const Grid& grid) {
  LikelihoodData d;
  d.kind = DataKind::kCellCounts;
  d.cell_values = std::move(counts);
  d.weights = Raster(grid, grid.cell_area());
  return d;
}

LikelihoodData LikelihoodData::cell_presence(std::vector<double> indicators, const Grid& grid) {
  LikelihoodData d;
  d.kind = DataKind::kCellPresence;
  d.cell_values = std::move(indicators);
  d.weights = Raster(grid, grid.cell_area());
  return d;
}

void LikelihoodData::validate(const Grid& grid) const {
  if (!(weights.grid() == grid)) throw InvalidArgument("integration weights are on a different grid");
  for (double a : weights.values())
    if (!(a >= 0.0) || !std::isfinite(a))
      throw InvalidArgument("integration weights must be finite and >= 0");
  if (kind == DataKind::kPointPattern) return;
  if (cell_values.size() != grid.size())
    throw InvalidArgument("cell data has " + std::to_string(cell_values.size()) +
                          " values for " + std::to_string(grid.size()) + " cells");
  for (double v : cell_values) {
    if (kind == DataKind::kCellCounts && (!(v >= 0.0) || !std::isfinite(v)))
      throw InvalidArgument("cell counts must be finite and >= 0");
    if (kind == DataKind::kCellPresence && v != 0.0 && v != 1.0)
      throw InvalidArgument("presence indicators must be 0 or 1");
  }
}

namespace {

double sigmoid(double u) {
  return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
}

// log(sigmoid(u)) without overflow.
double log_sigmoid(double u) { return u >= 0.0 ? -std::log1p(std::exp(-u)) : u - std::log1p(std::exp(u)); }

// Evaluates log eta, its coefficient gradient u and the (detection-only)
// second-derivative block D at a cell.
class Predictor {
 public:
  Predictor(const IntensityModel& m, const Eigen::VectorXd& theta) : m_(m), theta_(theta) {}

  std::size_t n() const { return m_.n_parameters(); }

  bool excluded(std::size_t cell) const {
    return m_.log_effort_offset && std::isinf((*m_.log_effort_offset)[cell]) &&
           (*m_.log_effort_offset)[cell] < 0.0;
  }

  // Returns log eta. `u`, when given, receives the gradient; `dsig`
  // receives sigma(1 - sigma) for the detection block (D = -dsig w1 w1').
  double log_eta(std::size_t cell, Eigen::VectorXd* u = nullptr, double* dsig = nullptr) const {
    double le = 0.0;
    std::size_t k = 0;
    for (const auto& r : m_.env) {
      const double v = value(r, cell, "environmental covariate");
      le += theta_[static_cast<Eigen::Index>(k)] * v;
      if (u) (*u)[static_cast<Eigen::Index>(k)] = v;
      ++k;
    }
    if (!m_.detection.empty()) {
      double lin = 0.0;
      const std::size_t k0 = k;
      for (const auto& r : m_.detection) {
        const double v = value(r, cell, "detection covariate");
        lin += theta_[static_cast<Eigen::Index>(k)] * v;
        ++k;
      }
      le += log_sigmoid(lin);
      const double s = sigmoid(lin);
      if (u)
        for (std::size_t j = 0; j < m_.detection.size(); ++j)
          (*u)[static_cast<Eigen::Index>(k0 + j)] = (1.0 - s) * m_.detection[j][cell];
      if (dsig) *dsig = s * (1.0 - s);
    }
    for (const auto& r : m_.effort) {
      const double v = value(r, cell, "effort covariate");
      le += theta_[static_cast<Eigen::Index>(k)] * v;
      if (u) (*u)[static_cast<Eigen::Index>(k)] = v;
      ++k;
    }
    if (m_.log_effort_offset) le += value(*m_.log_effort_offset, cell, "log-effort offset");
    return le;
  }

  // H += b * D at a cell with detection derivative dsig.
  void add_detection_curvature(std::size_t cell, double b, double dsig, Eigen::MatrixXd& H) const {
    if (m_.detection.empty() || b == 0.0) return;
    const auto k0 = static_cast<Eigen::Index>(m_.n_env());
    const auto nd = static_cast<Eigen::Index>(m_.n_detection());
    for (Eigen::Index a = 0; a < nd; ++a)
      for (Eigen::Index c = 0; c < nd; ++c)
        H(k0 + a, k0 + c) -= b * dsig * m_.detection[static_cast<std::size_t>(a)][cell] *
                             m_.detection[static_cast<std::size_t>(c)][cell];
  }

 private:
  static double value(const Raster& r, std::size_t cell, const char* what) {
    const double v = r[cell];
    if (std::isnan(v))
      throw MissingData(std::string(what) + " missing at cell " + std::to_string(cell));
    return v;
  }

  const IntensityModel& m_;
  const Eigen::VectorXd& theta_;
};

Eigen::VectorXd coefficients_or_zero(const IntensityModel& m) {
  if (m.coefficients.size() == 0) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.n_parameters()));
  return m.coefficients;
}

struct Eval {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

// Unified evaluation. Every cell contributes f(Lambda) with Lambda = alpha
// eta; derivatives follow from grad Lambda = Lambda u and
// hess Lambda = Lambda (u u' + D). Point patterns add log eta per point.
Eval evaluate(const IntensityModel& model, const LikelihoodData& data, const Eigen::VectorXd& theta,
              int order) {
  model.validate();
  data.validate(model.grid);
  if (static_cast<std::size_t>(theta.size()) != model.n_parameters())
    throw InvalidArgument("parameter vector has the wrong length");
  const Predictor pred(model, theta);
  const auto n = static_cast<Eigen::Index>(pred.n());
  Eval e;
  if (order >= 1) e.gradient = Eigen::VectorXd::Zero(n);
  if (order >= 2) e.hessian = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd u(n);
  double dsig = 0.0;

  auto accumulate = [&](std::size_t cell, double c, double a, double b) {
    if (order >= 1) e.gradient.noalias() += c * u;
    if (order >= 2) {
      if (a != 0.0) e.hessian.noalias() += a * u * u.transpose();
      pred.add_detection_curvature(cell, b, dsig, e.hessian);
    }
  };

  const Grid& grid = model.grid;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double alpha = data.weights[i];
    const double obs = data.kind == DataKind::kPointPattern ? 0.0 : data.cell_values[i];
    if (alpha == 0.0 || pred.excluded(i)) {
      if (obs > 0.0)
        throw DataInconsistency("observation in cell " + std::to_string(i) +
                                " which has zero effort or zero integration weight");
      continue;
    }
    const double le = pred.log_eta(i, order >= 1 ? &u : nullptr, &dsig);
    const double lambda = alpha * std::exp(le);
    switch (data.kind) {
      case DataKind::kPointPattern:
        e.value -= lambda;
        accumulate(i, -lambda, -lambda, -lambda);
        break;
      case DataKind::kCellCounts: {
        const double logl = std::log(alpha) + le;
        e.value += (obs > 0.0 ? obs * logl : 0.0) - lambda - std::lgamma(obs + 1.0);
        accumulate(i, obs - lambda, -lambda, obs - lambda);
        break;
      }
      case DataKind::kCellPresence: {
        if (obs == 1.0) {
          const double em1 = -std::expm1(-lambda);  // 1 - exp(-Lambda)
          e.value += std::log(em1);
          const double fl = lambda * std::exp(-lambda) / em1;  // f' Lambda
          const double fll = -lambda * lambda * std::exp(-lambda) / (em1 * em1);  // f'' Lambda^2
          accumulate(i, fl, fll + fl, fl);
        } else {
          e.value -= lambda;
          accumulate(i, -lambda, -lambda, -lambda);
        }
        break;
      }
    }
  }

  if (data.kind == DataKind::kPointPattern) {
    for (const Point& p : data.points) {
      const std::size_t cell = grid.cell_of(p);
      if (data.weights[cell] == 0.0 || pred.excluded(cell))
        throw DataInconsistency("observed point (" + std::to_string(p.x) + ", " +
                                std::to_string(p.y) + ") lies in a zero-effort cell");
      e.value += pred.log_eta(cell, order >= 1 ? &u : nullptr, &dsig);
      accumulate(cell, 1.0, 0.0, 1.0);
    }
  }
  return e;
}

void require_kind(const LikelihoodData& data, DataKind kind, const char* fn) {
  if (data.kind != kind) throw InvalidArgument(std::string(fn) + ": wrong likelihood data kind");
}

}  // namespace

double eta(const IntensityModel& model, std::size_t cell) {
  model.validate();
  if (cell >= model.grid.size()) throw OutOfDomain("cell index out of range");
  const Eigen::VectorXd theta = coefficients_or_zero(model);
  const Predictor pred(model, theta);
  return std::exp(pred.log_eta(cell));
}

double eta_at(const IntensityModel& model, const Point& p) {
  return eta(model, model.grid.cell_of(p));
}

double riemann_loglik(const IntensityModel& model, const LikelihoodData& data) {
  require_kind(data, DataKind::kPointPattern, "riemann_loglik");
  model.validate();
  data.validate(model.grid);
  const Eigen::VectorXd theta = coefficients_or_zero(model);
  const Predictor pred(model, theta);
  const Grid& grid = model.grid;
  double points_term = 0.0;
  for (const Point& p : data.points) {
    const std::size_t cell = grid.cell_of(p);
    if (data.weights[cell] == 0.0 || pred.excluded(cell))
      throw DataInconsistency("observed point lies in a zero-effort cell");
    points_term += pred.log_eta(cell);
  }
  double integral = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (data.weights[i] == 0.0 || pred.excluded(i)) continue;
    integral += data.weights[i] * std::exp(pred.log_eta(i));
  }
  return points_term - integral;
}

double count_loglik(const IntensityModel& model, const LikelihoodData& data) {
  require_kind(data, DataKind::kCellCounts, "count_loglik");
  return evaluate(model, data, coefficients_or_zero(model), 0).value;
}

double presence_loglik(const IntensityModel& model, const LikelihoodData& data) {
  require_kind(data, DataKind::kCellPresence, "presence_loglik");
  return evaluate(model, data, coefficients_or_zero(model), 0).value;
}

double loglik(const IntensityModel& model, const LikelihoodData& data) {
  switch (data.kind) {
    case DataKind::kPointPattern:
      return riemann_loglik(model, data);
    case DataKind::kCellCounts:
      return count_loglik(model, data);
    case DataKind::kCellPresence:
      return presence_loglik(model, data);
  }
  return 0.0;
}

Eigen::VectorXd loglik_gradient(const IntensityModel& model, const LikelihoodData& data) {
  return evaluate(model, data, coefficients_or_zero(model), 1).gradient;
}

Eigen::MatrixXd loglik_hessian(const IntensityModel& model, const LikelihoodData& data) {
  return evaluate(model, data, coefficients_or_zero(model), 2).hessian;
}

void JointModel::validate() const {
  if (components.empty()) throw InvalidArgument("joint model has no components");
  if (!names.empty() && names.size() != n_parameters)
    throw InvalidArgument("joint parameter name count mismatch");
  for (std::size_t k = 0; k < components.size(); ++k) {
    const auto& c = components[k];
    c.model.validate();
    if (c.parameter_map.size() != c.model.n_parameters())
      throw InvalidArgument("component " + std::to_string(k) + " maps " +
                            std::to_string(c.parameter_map.size()) + " parameters but its model has " +
                            std::to_string(c.model.n_parameters()));
    for (std::size_t idx : c.parameter_map)
      if (idx >= n_parameters)
        throw InvalidArgument("component " + std::to_string(k) + " maps to parameter index " +
                              std::to_string(idx) + " beyond the shared vector");
  }
}

namespace {

Eigen::VectorXd gather(const Eigen::VectorXd& theta, const std::vector<std::size_t>& map) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(map.size()));
  for (std::size_t j = 0; j < map.size(); ++j)
    out[static_cast<Eigen::Index>(j)] = theta[static_cast<Eigen::Index>(map[j])];
  return out;
}

Eval joint_evaluate(const JointModel& jm, const Eigen::VectorXd& theta, int order) {
  jm.validate();
  if (static_cast<std::size_t>(theta.size()) != jm.n_parameters)
    throw InvalidArgument("joint parameter vector has the wrong length");
  const auto n = static_cast<Eigen::Index>(jm.n_parameters);
  Eval total;
  if (order >= 1) total.gradient = Eigen::VectorXd::Zero(n);
  if (order >= 2) total.hessian = Eigen::MatrixXd::Zero(n, n);
  for (const auto& c : jm.components) {
    const Eigen::VectorXd local = gather(theta, c.parameter_map);
    const Eval e = evaluate(c.model, c.data, local, order);
    total.value += e.value;
    for (std::size_t a = 0; a < c.parameter_map.size() && order >= 1; ++a) {
      const auto ga = static_cast<Eigen::Index>(c.parameter_map[a]);
      total.gradient[ga] += e.gradient[static_cast<Eigen::Index>(a)];
      if (order >= 2)
        for (std::size_t b = 0; b < c.parameter_map.size(); ++b)
          total.hessian(ga, static_cast<Eigen::Index>(c.parameter_map[b])) +=
              e.hessian(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
  }
  return total;
}

using Objective = std::function<Eval(const Eigen::VectorXd&, int)>;

// Levenberg-damped Newton ascent on the exact Hessian. Damping keeps steps
// well defined when the information is singular or indefinite.
FitResult maximize(const Objective& objective, std::size_t n_params, const FitOptions& options) {
  const auto n = static_cast<Eigen::Index>(n_params);
  FitResult r;
  Eigen::VectorXd theta = options.start ? *options.start : Eigen::VectorXd::Zero(n);
  if (theta.size() != n) throw InvalidArgument("start vector has the wrong length");
  Eval cur = objective(theta, 2);
  if (!std::isfinite(cur.value))
    throw NumericalFailure("log-likelihood is not finite at the start vector");

  double mu = 0.0;
  int iter = 0;
  bool stalled = false;
  for (; iter < options.max_iterations; ++iter) {
    if (cur.gradient.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) break;
    const Eigen::MatrixXd info = -cur.hessian;
    const double scale = std::max(1.0, info.diagonal().cwiseAbs().maxCoeff());
    bool accepted = false;
    for (int attempt = 0; attempt < 80 && !accepted; ++attempt) {
      Eigen::MatrixXd A = info;
      A.diagonal().array() += mu * scale;
      Eigen::LLT<Eigen::MatrixXd> llt(A);
      if (llt.info() != Eigen::Success) {
        mu = std::max(mu * 10.0, 1e-12);
        continue;
      }
      const Eigen::VectorXd d = llt.solve(cur.gradient);
      if (!d.allFinite()) {
        mu = std::max(mu * 10.0, 1e-12);
        continue;
      }
      if (d.lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + theta.lpNorm<Eigen::Infinity>())) {
        stalled = true;
        break;
      }
      const Eigen::VectorXd next = theta + d;
      const double v = objective(next, 0).value;
      const double slack = 1e-13 * (1.0 + std::abs(cur.value));
      if (std::isfinite(v) && v >= cur.value - slack) {
        theta = next;
        cur = objective(theta, 2);
        mu = mu > 1e-12 ? mu / 10.0 : 0.0;
        accepted = true;
      } else {
        mu = std::max(mu * 10.0, 1e-8);
      }
    }
    if (!accepted) {
      stalled = true;
      break;
    }
  }

  r.coefficients = theta;
  r.loglik = cur.value;
  r.gradient_max_norm = cur.gradient.lpNorm<Eigen::Infinity>();
  r.iterations = iter;
  r.converged = r.gradient_max_norm < options.gradient_tolerance;
  if (!r.converged && stalled) {
    // Steps no longer change the iterate: accept when the Newton decrement
    // sits at floating-point noise of the log-likelihood.
    Eigen::LDLT<Eigen::MatrixXd> ldlt(-cur.hessian);
    const double dec = cur.gradient.dot(ldlt.solve(cur.gradient));
    if (std::isfinite(dec) && std::abs(dec) < 1e-12 * (1.0 + std::abs(cur.value))) r.converged = true;
  }
  if (r.converged)
    r.message = "converged";
  else if (stalled)
    r.message = "stalled: no ascent step found";
  else
    r.message = "iteration limit reached";

  const Eigen::MatrixXd info = -cur.hessian;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(info);
  const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  if (es.info() != Eigen::Success || !(lmin > options.singular_tolerance * std::max(lmax, 1e-300))) {
    r.singular = true;
    r.covariance = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
    r.std_errors = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
    r.message += "; information matrix singular";
  } else {
    const Eigen::MatrixXd& V = es.eigenvectors();
    r.covariance = V * es.eigenvalues().cwiseInverse().asDiagonal() * V.transpose();
    r.covariance = 0.5 * (r.covariance + r.covariance.transpose()).eval();
    r.std_errors = r.covariance.diagonal().cwiseSqrt();
  }
  return r;
}

}  // namespace

double joint_loglik(const JointModel& jm, const Eigen::VectorXd& theta) {
  return joint_evaluate(jm, theta, 0).value;
}

Eigen::VectorXd joint_gradient(const JointModel& jm, const Eigen::VectorXd& theta) {
  return joint_evaluate(jm, theta, 1).gradient;
}

Eigen::MatrixXd joint_hessian(const JointModel& jm, const Eigen::VectorXd& theta) {
  return joint_evaluate(jm, theta, 2).hessian;
}

FitResult fit_mle(const IntensityModel& model, const LikelihoodData& data, const FitOptions& options) {
  model.validate();
  data.validate(model.grid);
  FitResult r = maximize(
      [&](const Eigen::VectorXd& theta, int order) { return evaluate(model, data, theta, order); },
      model.n_parameters(), options);
  r.names = model.names;
  return r;
}

FitResult fit_joint_mle(const JointModel& jm, const FitOptions& options) {
  jm.validate();
  FitResult r = maximize(
      [&](const Eigen::VectorXd& theta, int order) { return joint_evaluate(jm, theta, order); },
      jm.n_parameters, options);
  r.names = jm.names;
  return r;
}

Raster intensity_raster(const IntensityModel& model, const Eigen::VectorXd& theta,
                        const PredictOptions& options) {
  IntensityModel m = model;
  if (options.fix_detection) m.detection.clear();
  if (options.fix_effort) {
    m.effort.clear();
    m.log_effort_offset.reset();
  }
  // Keep the coefficients of the blocks that survive.
  Eigen::VectorXd t(static_cast<Eigen::Index>(m.n_parameters()));
  Eigen::Index k = 0;
  const auto copy = [&](Eigen::Index from, std::size_t count) {
    for (std::size_t j = 0; j < count; ++j) t[k++] = theta[from + static_cast<Eigen::Index>(j)];
  };
  if (static_cast<std::size_t>(theta.size()) != model.n_parameters())
    throw InvalidArgument("coefficient vector does not match the model");
  copy(0, model.n_env());
  if (!options.fix_detection) copy(static_cast<Eigen::Index>(model.n_env()), model.n_detection());
  if (!options.fix_effort)
    copy(static_cast<Eigen::Index>(model.n_env() + model.n_detection()), model.n_effort());
  m.coefficients = t;
  m.names.clear();
  m.validate();

  const Predictor pred(m, m.coefficients);
  Raster out(model.grid);
  for (std::size_t i = 0; i < out.size(); ++i) {
    try {
      out[i] = pred.excluded(i) ? 0.0 : std::exp(pred.log_eta(i));
    } catch (const MissingData&) {
      out[i] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

Raster predict_intensity(const FitResult& fit, const IntensityModel& model,
                         const PredictOptions& options) {
  if (!fit.converged) throw NumericalFailure("predict_intensity requires a converged fit");
  return intensity_raster(model, fit.coefficients, options);
}

}  // namespace udfit
