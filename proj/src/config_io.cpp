#include "latentiv/config_io.hpp"

#include <functional>
#include <map>
#include <string>

#include "latentiv/error.hpp"

namespace latentiv {

namespace {

using Setter = std::function<void(const nlohmann::json&)>;

template <typename T>
Setter bind(T& field) {
  return [&field](const nlohmann::json& v) { field = v.get<T>(); };
}

void overlay(const nlohmann::json& j, const std::map<std::string, Setter>& setters,
             const char* what) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, std::string(what) + " must be an object");
  for (const auto& [key, value] : j.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw Error(ErrorCode::InvalidConfig, std::string("unknown ") + what + " key '" + key + "'");
    }
    try {
      it->second(value);
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::InvalidConfig,
                  std::string(what) + " key '" + key + "' has the wrong type");
    }
  }
}

}  // namespace

nlohmann::ordered_json to_json(const datagen::SimConfig& c) {
  return {{"n_individuals", c.n_individuals},
          {"t_steps", c.t_steps},
          {"p_order", c.p_order},
          {"dim_x", c.dim_x},
          {"dim_u", c.dim_u},
          {"rho_w", c.rho_w},
          {"rho_x", c.rho_x},
          {"rho_u", c.rho_u},
          {"noise_sd", c.noise_sd},
          {"master_seed", c.master_seed},
          {"outcome_noise_sd", c.outcome_noise_sd},
          {"initial_history_sd", c.initial_history_sd},
          {"disable_confounders", c.disable_confounders}};
}

nlohmann::ordered_json to_json(const factor::TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"hidden_units", c.hidden_units},
          {"learning_rate", c.learning_rate},
          {"keep_probability", c.keep_probability},
          {"latent_dim", c.latent_dim},
          {"seed", c.seed},
          {"fc_units", c.fc_units},
          {"include_treatment_input", c.include_treatment_input},
          {"gradient_clip", c.gradient_clip},
          {"standardize", c.standardize},
          {"single_precision", c.single_precision}};
}

nlohmann::ordered_json to_json(const estimate::EstimatorOptions& o) {
  return {{"include_covariates", o.include_covariates},
          {"folds", o.folds},
          {"allow_ridge", o.allow_ridge},
          {"weak_instrument_threshold", o.weak_instrument_threshold}};
}

void apply_json(const nlohmann::json& j, datagen::SimConfig& c) {
  overlay(j,
          {{"n_individuals", bind(c.n_individuals)},
           {"t_steps", bind(c.t_steps)},
           {"p_order", bind(c.p_order)},
           {"dim_x", bind(c.dim_x)},
           {"dim_u", bind(c.dim_u)},
           {"rho_w", bind(c.rho_w)},
           {"rho_x", bind(c.rho_x)},
           {"rho_u", bind(c.rho_u)},
           {"noise_sd", bind(c.noise_sd)},
           {"master_seed", bind(c.master_seed)},
           {"outcome_noise_sd", bind(c.outcome_noise_sd)},
           {"initial_history_sd", bind(c.initial_history_sd)},
           {"disable_confounders", bind(c.disable_confounders)}},
          "simulation config");
}

void apply_json(const nlohmann::json& j, factor::TrainConfig& c) {
  overlay(j,
          {{"epochs", bind(c.epochs)},
           {"batch_size", bind(c.batch_size)},
           {"hidden_units", bind(c.hidden_units)},
           {"learning_rate", bind(c.learning_rate)},
           {"keep_probability", bind(c.keep_probability)},
           {"latent_dim", bind(c.latent_dim)},
           {"seed", bind(c.seed)},
           {"fc_units", bind(c.fc_units)},
           {"include_treatment_input", bind(c.include_treatment_input)},
           {"gradient_clip", bind(c.gradient_clip)},
           {"standardize", bind(c.standardize)},
           {"single_precision", bind(c.single_precision)}},
          "training config");
}

void apply_json(const nlohmann::json& j, estimate::EstimatorOptions& o) {
  overlay(j,
          {{"include_covariates", bind(o.include_covariates)},
           {"folds", bind(o.folds)},
           {"allow_ridge", bind(o.allow_ridge)},
           {"weak_instrument_threshold", bind(o.weak_instrument_threshold)}},
          "estimator options");
}

}  // namespace latentiv
