#include "latentiv/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "latentiv/config_io.hpp"
#include "latentiv/format.hpp"
#include "latentiv/numkit.hpp"

namespace latentiv::estimate {

namespace {

using numkit::fit_least_squares;
using numkit::LeastSquaresOptions;

LeastSquaresOptions solver_options(const EstimatorOptions& options) {
  LeastSquaresOptions o;
  o.allow_ridge = options.allow_ridge;
  return o;
}

void check_step(const TrajectoryPanel& panel, std::size_t t) {
  if (t < 1 || t > panel.t_steps()) {
    throw Error(ErrorCode::DimensionMismatch, "timestep " + std::to_string(t) +
                                                  " outside 1.." + std::to_string(panel.t_steps()));
  }
  if (panel.n() < 2) throw Error(ErrorCode::DegenerateTreatment, "fewer than two individuals");
}

bool is_constant(const Vector& v) {
  return v.size() == 0 || (v.array() == v(0)).all();
}

void require_varying_treatment(const Vector& w, std::size_t t) {
  if (is_constant(w)) {
    throw Error(ErrorCode::DegenerateTreatment,
                "treatment is constant across individuals at t=" + std::to_string(t));
  }
}

// [1, blocks...]
Matrix with_intercept(std::initializer_list<const Matrix*> blocks, Eigen::Index n) {
  Eigen::Index cols = 1;
  for (const Matrix* b : blocks) cols += b->cols();
  Matrix out(n, cols);
  out.col(0).setOnes();
  Eigen::Index at = 1;
  for (const Matrix* b : blocks) {
    out.middleCols(at, b->cols()) = *b;
    at += b->cols();
  }
  return out;
}

double rss(const Matrix& design, const Vector& response, const Vector& coef) {
  return (response - design * coef).squaredNorm();
}

// OLS of y on design; reports the coefficient at `column` with a
// homoscedastic standard error.
EffectEstimate ols_effect(const Matrix& design, const Vector& y, Eigen::Index column,
                          std::size_t t, EstimatorId id, const EstimatorOptions& options) {
  const auto fit = fit_least_squares(design, y, solver_options(options));
  const auto n = design.rows();
  const auto d = design.cols();
  const double dof = static_cast<double>(std::max<Eigen::Index>(n - d, 1));
  const double sigma2 = rss(design, y, fit.coefficients) / dof;
  EffectEstimate e;
  e.t = t;
  e.estimator = id;
  e.n = static_cast<std::size_t>(n);
  e.beta_hat = fit.coefficients(column);
  e.std_error = std::sqrt(std::max(0.0, sigma2 * fit.gram_inverse(column, column)));
  e.ridge_used = fit.ridge_used;
  return e;
}

}  // namespace

std::string_view to_string(EstimatorId id) {
  switch (id) {
    case EstimatorId::tsls: return "tsls";
    case EstimatorId::naive: return "naive";
    case EstimatorId::adjusted_ols: return "adjusted_ols";
    case EstimatorId::linear_dml: return "linear_dml";
    case EstimatorId::oracle_tsls: return "oracle_tsls";
  }
  return "unknown";
}

EstimatorId estimator_from_string(std::string_view name) {
  for (auto id : {EstimatorId::tsls, EstimatorId::naive, EstimatorId::adjusted_ols,
                  EstimatorId::linear_dml, EstimatorId::oracle_tsls}) {
    if (to_string(id) == name) return id;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown estimator '" + std::string(name) + "'");
}

bool needs_latents(EstimatorId id) {
  return id == EstimatorId::tsls || id == EstimatorId::oracle_tsls;
}

EffectEstimate tsls_step(const TrajectoryPanel& panel, const LatentPanel& latents, std::size_t t,
                         const EstimatorOptions& options) {
  check_step(panel, t);
  if (latents.n() != panel.n() || latents.t_steps() != panel.t_steps() || latents.dim() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "latent panel shape does not match the panel");
  }
  const auto n = static_cast<Eigen::Index>(panel.n());
  const Vector w = panel.treatments_at(t);
  const Vector y = panel.outcomes_at(t);
  require_varying_treatment(w, t);
  const Matrix z = latents.at_step(t);
  for (Eigen::Index d = 0; d < z.cols(); ++d) {
    if (is_constant(z.col(d))) {
      throw Error(ErrorCode::RankDeficient, "instrument column " + std::to_string(d) +
                                                " is constant at t=" + std::to_string(t));
    }
  }
  const Matrix x = options.include_covariates ? panel.covariates_at(t) : Matrix(n, 0);
  const auto solver = solver_options(options);

  // Stage 1: W on [1, L, X]; restricted fit W on [1, X] for the partial F.
  const Matrix stage1 = with_intercept({&z, &x}, n);
  const auto first = fit_least_squares(stage1, w, solver);
  const Vector w_hat = stage1 * first.coefficients;
  const double rss_u = rss(stage1, w, first.coefficients);
  const Matrix restricted = with_intercept({&x}, n);
  const auto first_r = fit_least_squares(restricted, w, solver);
  const double rss_r = rss(restricted, w, first_r.coefficients);
  const double q = static_cast<double>(z.cols());
  const double dof1 = static_cast<double>(std::max<Eigen::Index>(n - stage1.cols(), 1));
  double f_stat = std::numeric_limits<double>::infinity();
  if (rss_u > 0.0) f_stat = std::max(0.0, (rss_r - rss_u) / q) / (rss_u / dof1);

  // Stage 2: Y on [1, W_hat, X]; residuals use the observed W.
  const Matrix w_hat_col = w_hat;
  const Matrix stage2 = with_intercept({&w_hat_col, &x}, n);
  const auto second = fit_least_squares(stage2, y, solver);
  const Matrix w_col = w;
  const Matrix structural = with_intercept({&w_col, &x}, n);
  const double dof2 = static_cast<double>(std::max<Eigen::Index>(n - stage2.cols(), 1));
  const double sigma2 = rss(structural, y, second.coefficients) / dof2;

  EffectEstimate e;
  e.t = t;
  e.estimator = EstimatorId::tsls;
  e.n = panel.n();
  e.beta_hat = second.coefficients(1);
  e.std_error = std::sqrt(std::max(0.0, sigma2 * second.gram_inverse(1, 1)));
  e.first_stage_stat = f_stat;
  e.weak_instrument = f_stat < options.weak_instrument_threshold;
  e.ridge_used = first.ridge_used || first_r.ridge_used || second.ridge_used;
  if (!std::isfinite(e.beta_hat)) {
    throw Error(ErrorCode::RankDeficient, "non-finite TSLS estimate at t=" + std::to_string(t));
  }
  return e;
}

EffectEstimate naive_step(const TrajectoryPanel& panel, std::size_t t,
                          const EstimatorOptions& options) {
  check_step(panel, t);
  const auto n = static_cast<Eigen::Index>(panel.n());
  const Matrix w = panel.treatments_at(t);
  require_varying_treatment(w.col(0), t);
  return ols_effect(with_intercept({&w}, n), panel.outcomes_at(t), 1, t, EstimatorId::naive,
                    options);
}

EffectEstimate adjusted_ols_step(const TrajectoryPanel& panel, std::size_t t,
                                 const EstimatorOptions& options) {
  check_step(panel, t);
  const auto n = static_cast<Eigen::Index>(panel.n());
  const Matrix w = panel.treatments_at(t);
  require_varying_treatment(w.col(0), t);
  const Matrix x = panel.covariates_at(t);
  return ols_effect(with_intercept({&w, &x}, n), panel.outcomes_at(t), 1, t,
                    EstimatorId::adjusted_ols, options);
}

std::vector<std::size_t> fold_assignment(const TrajectoryPanel& panel, std::size_t folds) {
  const std::size_t n = panel.n();
  std::vector<std::uint64_t> keys(n);
  std::vector<double> row;
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    for (std::size_t t = 1; t <= panel.t_steps(); ++t) {
      for (std::size_t j = 0; j < panel.k(); ++j) row.push_back(panel.covariate(i, t, j));
      row.push_back(panel.treatment(i, t));
      row.push_back(panel.outcome(i, t));
    }
    keys[i] = fnv1a(row.data(), row.size() * sizeof(double));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  std::vector<std::size_t> fold(n);
  for (std::size_t r = 0; r < n; ++r) fold[order[r]] = r % folds;
  return fold;
}

EffectEstimate linear_dml_step(const TrajectoryPanel& panel, std::size_t t, std::size_t folds,
                               const EstimatorOptions& options) {
  check_step(panel, t);
  if (folds < 2) throw Error(ErrorCode::InvalidConfig, "cross-fitting needs folds >= 2");
  if (panel.n() < 2 * folds) {
    throw Error(ErrorCode::InvalidConfig, "cross-fitting needs n >= 2 * folds");
  }
  const auto n = static_cast<Eigen::Index>(panel.n());
  const Vector w = panel.treatments_at(t);
  const Vector y = panel.outcomes_at(t);
  require_varying_treatment(w, t);
  const Matrix x = panel.covariates_at(t);
  const Matrix design = with_intercept({&x}, n);
  const auto assignment = fold_assignment(panel, folds);
  const auto solver = solver_options(options);

  Vector rw(n), ry(n);
  bool ridge = false;
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train, held;
    for (Eigen::Index i = 0; i < n; ++i) {
      (assignment[static_cast<std::size_t>(i)] == f ? held : train).push_back(i);
    }
    const Matrix d_train = design(train, Eigen::all);
    const auto fit_w = fit_least_squares(d_train, w(train), solver);
    const auto fit_y = fit_least_squares(d_train, y(train), solver);
    ridge = ridge || fit_w.ridge_used || fit_y.ridge_used;
    const Matrix d_held = design(held, Eigen::all);
    rw(held) = w(held) - d_held * fit_w.coefficients;
    ry(held) = y(held) - d_held * fit_y.coefficients;
  }
  const double sww = rw.squaredNorm();
  if (!(sww > 0.0)) {
    throw Error(ErrorCode::DegenerateTreatment,
                "treatment residuals vanish after partialling out at t=" + std::to_string(t));
  }
  const double theta = rw.dot(ry) / sww;
  const double sigma2 = (ry - theta * rw).squaredNorm() / static_cast<double>(n - 1);

  EffectEstimate e;
  e.t = t;
  e.estimator = EstimatorId::linear_dml;
  e.n = panel.n();
  e.beta_hat = theta;
  e.std_error = std::sqrt(sigma2 / sww);
  e.folds = folds;
  e.ridge_used = ridge;
  return e;
}

EffectSeries effect_series(const TrajectoryPanel& panel, const LatentPanel* latents,
                           EstimatorId estimator, const EstimatorOptions& options) {
  EffectSeries series;
  series.estimator = estimator;
  series.panel_fingerprint = panel.fingerprint();
  series.options = options;
  if (needs_latents(estimator)) {
    if (latents == nullptr) {
      throw Error(ErrorCode::InvalidConfig,
                  std::string(to_string(estimator)) + " requires a latent panel");
    }
    series.latent_fingerprint = latents->source_fingerprint;
  }
  for (std::size_t t = 1; t <= panel.t_steps(); ++t) {
    StepOutcome step;
    step.t = t;
    try {
      switch (estimator) {
        case EstimatorId::tsls:
        case EstimatorId::oracle_tsls: {
          auto e = tsls_step(panel, *latents, t, options);
          e.estimator = estimator;
          step.estimate = e;
          break;
        }
        case EstimatorId::naive: step.estimate = naive_step(panel, t, options); break;
        case EstimatorId::adjusted_ols: step.estimate = adjusted_ols_step(panel, t, options); break;
        case EstimatorId::linear_dml:
          step.estimate = linear_dml_step(panel, t, options.folds, options);
          break;
      }
    } catch (const Error& e) {
      step.error = e.code();
      step.message = e.what();
    }
    series.steps.push_back(std::move(step));
  }
  return series;
}

std::string series_csv(const EffectSeries& series) {
  std::ostringstream out;
  out << "t,estimator,beta_hat,std_error,first_stage_stat,error_code\n";
  for (const auto& step : series.steps) {
    out << step.t << ',' << to_string(series.estimator) << ',';
    if (step.estimate) {
      const auto& e = *step.estimate;
      out << format_double(e.beta_hat) << ',' << format_double(e.std_error) << ',';
      if (e.first_stage_stat) out << format_double(*e.first_stage_stat);
      out << ',';
    } else {
      out << ",,,";
    }
    if (step.error) out << to_string(*step.error);
    out << '\n';
  }
  return out.str();
}

std::string series_json(const EffectSeries& series) {
  nlohmann::ordered_json j;
  j["estimator"] = to_string(series.estimator);
  j["panel_fingerprint"] = series.panel_fingerprint;
  j["latent_fingerprint"] = series.latent_fingerprint;
  j["options"] = to_json(series.options);
  auto steps = nlohmann::ordered_json::array();
  for (const auto& step : series.steps) {
    nlohmann::ordered_json s;
    s["t"] = step.t;
    if (step.estimate) {
      const auto& e = *step.estimate;
      s["beta_hat"] = e.beta_hat;
      s["std_error"] = e.std_error;
      s["n"] = e.n;
      if (e.first_stage_stat && std::isfinite(*e.first_stage_stat)) {
        s["first_stage_stat"] = *e.first_stage_stat;
      } else if (e.first_stage_stat) {
        s["first_stage_stat"] = "inf";
      }
      s["weak_instrument"] = e.weak_instrument;
      if (e.folds > 0) s["folds"] = e.folds;
      s["ridge_used"] = e.ridge_used;
    } else {
      s["error_code"] = step.error ? std::string(to_string(*step.error)) : "";
      s["message"] = step.message;
    }
    steps.push_back(std::move(s));
  }
  j["steps"] = std::move(steps);
  return j.dump(2) + "\n";
}

}  // namespace latentiv::estimate
