#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latentiv/numkit.hpp"
#include "latentiv/panel.hpp"

namespace latentiv::datagen {

// Synthetic p-order autoregressive process with latent confounders U_t and a
// latent scalar instrument S_t:
//
//   X_t = (1/p) sum_i (alpha_i X_{t-i} + omega_i W_{t-i}) + eps_X
//   U_t = (1/p) sum_i (beta_i U_{t-i} + lambda_i W_{t-i}) + eps_U
//   S_t = (1/p) sum_i (gamma_i S_{t-i} + delta_i sum(X_{t-i})) + eps_S
//   theta_t = mu_x Xhat_t + mu_u Uhat_t + mu_s Shat_t
//   W_t ~ Bernoulli(sigmoid(c theta_t))
//   Y_{t+1} = rho_w W_t + rho_x sum(X_t) + rho_u sum(U_t)
//
// Hatted terms sum all components over the last min(p, t) steps, current step
// included. History before t = 1 is zero unless initial_history_sd > 0, in
// which case X, U and S history is drawn N(0, initial_history_sd^2) per
// individual (treatment history stays 0).
struct SimConfig {
  std::size_t n_individuals = 2000;
  std::size_t t_steps = 20;
  std::size_t p_order = 1;
  std::size_t dim_x = 3;
  std::size_t dim_u = 3;
  double rho_w = 0.5;
  double rho_x = 0.5;
  double rho_u = 0.5;
  double noise_sd = 0.01;
  std::uint64_t master_seed = 0;

  double outcome_noise_sd = 0.0;
  double initial_history_sd = 0.0;
  // Forces U == 0 (no latent confounding at all).
  bool disable_confounders = false;

  // Throws InvalidConfig naming the offending field.
  void validate() const;
};

struct PanelCoefficients {
  std::vector<double> alpha, lambda, delta;  // N(0, 0.5^2)
  std::vector<double> omega, beta, gamma;    // entry i ~ N(1 - i/p, (i/p)^2)
  double mu_x = 0.0, mu_u = 0.0, mu_s = 0.0, c = 0.0;

  static PanelCoefficients zeros(std::size_t p_order);
};

struct SyntheticPanel {
  TrajectoryPanel observed;
  std::vector<double> latent_u;  // [n x t_steps x dim_u]
  std::vector<double> latent_s;  // [n x t_steps]
  double true_effect = 0.0;
  PanelCoefficients coefficients;

  double s(std::size_t i, std::size_t t) const {
    return latent_s[i * observed.t_steps() + (t - 1)];
  }
  double u(std::size_t i, std::size_t t, std::size_t j, std::size_t dim_u) const {
    return latent_u[(i * observed.t_steps() + (t - 1)) * dim_u + j];
  }

  // The generator's true instrument S_t laid out as a one-dimensional latent.
  LatentPanel oracle_latents() const;
};

PanelCoefficients draw_coefficients(const SimConfig& config, numkit::RngStream& rng);

numkit::RngStream replicate_seed(std::uint64_t master_seed, std::uint64_t replicate);

SyntheticPanel simulate_panel(const SimConfig& config, std::uint64_t replicate);

// Generation with caller-supplied coefficients; `rng` drives the noise and
// treatment draws only.
SyntheticPanel simulate_panel(const SimConfig& config, const PanelCoefficients& coefficients,
                              numkit::RngStream& rng);

double sigmoid(double x);

// JSON sidecar with the configuration, coefficients and true effect.
std::string truth_sidecar_json(const SimConfig& config, const SyntheticPanel& panel,
                               std::uint64_t replicate);

}  // namespace latentiv::datagen
