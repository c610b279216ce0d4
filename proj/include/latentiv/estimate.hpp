#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "latentiv/error.hpp"
#include "latentiv/panel.hpp"

namespace latentiv::estimate {

enum class EstimatorId { tsls, naive, adjusted_ols, linear_dml, oracle_tsls };

std::string_view to_string(EstimatorId id);
EstimatorId estimator_from_string(std::string_view name);
// Estimators that consume a LatentPanel.
bool needs_latents(EstimatorId id);

struct EstimatorOptions {
  // Include X_t as exogenous controls in both TSLS stages.
  bool include_covariates = true;
  std::size_t folds = 5;
  // Ridge fallback on near-singular designs; the estimate is flagged.
  bool allow_ridge = false;
  double weak_instrument_threshold = 10.0;
};

struct EffectEstimate {
  std::size_t t = 0;
  double beta_hat = 0.0;
  double std_error = 0.0;
  EstimatorId estimator = EstimatorId::naive;
  std::size_t n = 0;
  // Partial F statistic of the excluded instruments in stage 1 (TSLS only).
  std::optional<double> first_stage_stat;
  bool weak_instrument = false;
  std::size_t folds = 0;
  bool ridge_used = false;
};

EffectEstimate tsls_step(const TrajectoryPanel& panel, const LatentPanel& latents, std::size_t t,
                         const EstimatorOptions& options = {});
EffectEstimate naive_step(const TrajectoryPanel& panel, std::size_t t,
                          const EstimatorOptions& options = {});
EffectEstimate adjusted_ols_step(const TrajectoryPanel& panel, std::size_t t,
                                 const EstimatorOptions& options = {});
EffectEstimate linear_dml_step(const TrajectoryPanel& panel, std::size_t t, std::size_t folds,
                               const EstimatorOptions& options = {});

// Fold label per individual for cross-fitting. Individuals are ordered by a
// hash of their own trajectory and dealt round-robin, so the assignment is
// balanced and does not depend on row order.
std::vector<std::size_t> fold_assignment(const TrajectoryPanel& panel, std::size_t folds);

struct StepOutcome {
  std::size_t t = 0;
  std::optional<EffectEstimate> estimate;
  std::optional<ErrorCode> error;
  std::string message;
};

struct EffectSeries {
  EstimatorId estimator = EstimatorId::naive;
  std::vector<StepOutcome> steps;  // ordered by t
  std::uint64_t panel_fingerprint = 0;
  std::uint64_t latent_fingerprint = 0;
  EstimatorOptions options;
};

// Runs one estimator over t = 1..T. Per-step failures become gaps.
EffectSeries effect_series(const TrajectoryPanel& panel, const LatentPanel* latents,
                           EstimatorId estimator, const EstimatorOptions& options = {});

// CSV columns: t,estimator,beta_hat,std_error,first_stage_stat,error_code
std::string series_csv(const EffectSeries& series);
std::string series_json(const EffectSeries& series);

}  // namespace latentiv::estimate
