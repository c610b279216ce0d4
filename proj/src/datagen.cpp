#include "latentiv/datagen.hpp"

#include <cmath>

#include <json.hpp>

#include "latentiv/config_io.hpp"
#include "latentiv/error.hpp"

namespace latentiv::datagen {

namespace {

constexpr std::uint64_t kCoefficientTag = 1;
constexpr std::uint64_t kTrajectoryTag = 2;

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::InvalidConfig, message);
}

}  // namespace

void SimConfig::validate() const {
  require(p_order >= 1, "p_order >= 1 required (got " + std::to_string(p_order) + ")");
  require(t_steps >= p_order, "t_steps >= p_order required");
  require(n_individuals >= 1, "n_individuals >= 1 required");
  require(dim_x >= 1, "dim_x >= 1 required");
  require(dim_u >= 1, "dim_u >= 1 required");
  require(noise_sd >= 0.0, "noise_sd >= 0 required");
  require(outcome_noise_sd >= 0.0, "outcome_noise_sd >= 0 required");
  require(initial_history_sd >= 0.0, "initial_history_sd >= 0 required");
  require(std::isfinite(rho_w) && std::isfinite(rho_x) && std::isfinite(rho_u),
          "outcome coefficients must be finite");
}

PanelCoefficients PanelCoefficients::zeros(std::size_t p_order) {
  PanelCoefficients c;
  for (auto* v : {&c.alpha, &c.lambda, &c.delta, &c.omega, &c.beta, &c.gamma}) {
    v->assign(p_order, 0.0);
  }
  return c;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

PanelCoefficients draw_coefficients(const SimConfig& config, numkit::RngStream& rng) {
  config.validate();
  const std::size_t p = config.p_order;
  const double pd = static_cast<double>(p);
  PanelCoefficients c = PanelCoefficients::zeros(p);
  for (std::size_t i = 0; i < p; ++i) {
    const double frac = static_cast<double>(i + 1) / pd;
    c.alpha[i] = rng.normal(0.0, 0.5);
    c.lambda[i] = rng.normal(0.0, 0.5);
    c.delta[i] = rng.normal(0.0, 0.5);
    c.omega[i] = rng.normal(1.0 - frac, frac);
    c.beta[i] = rng.normal(1.0 - frac, frac);
    c.gamma[i] = rng.normal(1.0 - frac, frac);
  }
  c.mu_x = rng.normal(0.0, 1.0);
  c.mu_u = rng.normal(0.0, 1.0);
  c.mu_s = rng.normal(0.0, 1.0);
  c.c = rng.normal(0.0, 1.0);
  return c;
}

numkit::RngStream replicate_seed(std::uint64_t master_seed, std::uint64_t replicate) {
  return numkit::RngStream(master_seed, replicate);
}

SyntheticPanel simulate_panel(const SimConfig& config, std::uint64_t replicate) {
  config.validate();
  const numkit::RngStream root = replicate_seed(config.master_seed, replicate);
  numkit::RngStream coefficient_rng = root.split(kCoefficientTag);
  numkit::RngStream trajectory_rng = root.split(kTrajectoryTag);
  const PanelCoefficients coefficients = draw_coefficients(config, coefficient_rng);
  return simulate_panel(config, coefficients, trajectory_rng);
}

SyntheticPanel simulate_panel(const SimConfig& config, const PanelCoefficients& coef,
                              numkit::RngStream& rng) {
  config.validate();
  const std::size_t n = config.n_individuals;
  const std::size_t steps = config.t_steps;
  const std::size_t p = config.p_order;
  const std::size_t kx = config.dim_x;
  const std::size_t ku = config.dim_u;
  if (coef.alpha.size() != p || coef.lambda.size() != p || coef.delta.size() != p ||
      coef.omega.size() != p || coef.beta.size() != p || coef.gamma.size() != p) {
    throw Error(ErrorCode::DimensionMismatch, "coefficient arrays must have length p_order");
  }
  const double inv_p = 1.0 / static_cast<double>(p);

  SyntheticPanel out;
  out.observed = TrajectoryPanel(n, steps, kx);
  out.latent_u.assign(n * steps * ku, 0.0);
  out.latent_s.assign(n * steps, 0.0);
  out.true_effect = config.rho_w;
  out.coefficients = coef;

  // Per-individual history buffers: index h = p + (t - 1); h < p is pre-sample.
  const std::size_t len = p + steps;
  std::vector<double> x(len * kx), u(len * ku), s(len), w(len);

  for (std::size_t i = 0; i < n; ++i) {
    std::fill(x.begin(), x.end(), 0.0);
    std::fill(u.begin(), u.end(), 0.0);
    std::fill(s.begin(), s.end(), 0.0);
    std::fill(w.begin(), w.end(), 0.0);
    if (config.initial_history_sd > 0.0) {
      for (std::size_t h = 0; h < p; ++h) {
        for (std::size_t j = 0; j < kx; ++j) x[h * kx + j] = rng.normal(0.0, config.initial_history_sd);
        if (!config.disable_confounders) {
          for (std::size_t j = 0; j < ku; ++j) u[h * ku + j] = rng.normal(0.0, config.initial_history_sd);
        }
        s[h] = rng.normal(0.0, config.initial_history_sd);
      }
    }

    for (std::size_t t = 1; t <= steps; ++t) {
      const std::size_t h = p + t - 1;
      for (std::size_t j = 0; j < kx; ++j) {
        double acc = 0.0;
        for (std::size_t lag = 1; lag <= p; ++lag) {
          acc += coef.alpha[lag - 1] * x[(h - lag) * kx + j] + coef.omega[lag - 1] * w[h - lag];
        }
        x[h * kx + j] = inv_p * acc + rng.normal(0.0, config.noise_sd);
      }
      for (std::size_t j = 0; j < ku; ++j) {
        double acc = 0.0;
        for (std::size_t lag = 1; lag <= p; ++lag) {
          acc += coef.beta[lag - 1] * u[(h - lag) * ku + j] + coef.lambda[lag - 1] * w[h - lag];
        }
        const double noise = rng.normal(0.0, config.noise_sd);
        u[h * ku + j] = config.disable_confounders ? 0.0 : inv_p * acc + noise;
      }
      {
        double acc = 0.0;
        for (std::size_t lag = 1; lag <= p; ++lag) {
          double x_sum = 0.0;
          for (std::size_t j = 0; j < kx; ++j) x_sum += x[(h - lag) * kx + j];
          acc += coef.gamma[lag - 1] * s[h - lag] + coef.delta[lag - 1] * x_sum;
        }
        s[h] = inv_p * acc + rng.normal(0.0, config.noise_sd);
      }

      double x_hat = 0.0, u_hat = 0.0, s_hat = 0.0;
      const std::size_t window = std::min(p, t);
      for (std::size_t back = 0; back < window; ++back) {
        const std::size_t hh = h - back;
        for (std::size_t j = 0; j < kx; ++j) x_hat += x[hh * kx + j];
        for (std::size_t j = 0; j < ku; ++j) u_hat += u[hh * ku + j];
        s_hat += s[hh];
      }
      const double theta = coef.mu_x * x_hat + coef.mu_u * u_hat + coef.mu_s * s_hat;
      w[h] = rng.bernoulli(sigmoid(coef.c * theta)) ? 1.0 : 0.0;

      double x_sum = 0.0, u_sum = 0.0;
      for (std::size_t j = 0; j < kx; ++j) x_sum += x[h * kx + j];
      for (std::size_t j = 0; j < ku; ++j) u_sum += u[h * ku + j];
      double y = config.rho_w * w[h] + config.rho_x * x_sum + config.rho_u * u_sum;
      if (config.outcome_noise_sd > 0.0) y += rng.normal(0.0, config.outcome_noise_sd);

      for (std::size_t j = 0; j < kx; ++j) out.observed.covariate(i, t, j) = x[h * kx + j];
      out.observed.treatment(i, t) = w[h];
      out.observed.outcome(i, t) = y;
      for (std::size_t j = 0; j < ku; ++j) out.latent_u[(i * steps + t - 1) * ku + j] = u[h * ku + j];
      out.latent_s[i * steps + t - 1] = s[h];
    }
  }
  return out;
}

LatentPanel SyntheticPanel::oracle_latents() const {
  LatentPanel l(observed.n(), observed.t_steps(), 1);
  for (std::size_t i = 0; i < observed.n(); ++i)
    for (std::size_t t = 1; t <= observed.t_steps(); ++t) l.at(i, t, 0) = s(i, t);
  l.source_fingerprint = observed.fingerprint() ^ 0x5ULL;
  return l;
}

std::string truth_sidecar_json(const SimConfig& config, const SyntheticPanel& panel,
                               std::uint64_t replicate) {
  nlohmann::ordered_json j;
  j["format"] = "latentiv.truth";
  j["version"] = 1;
  j["replicate"] = replicate;
  j["true_effect"] = panel.true_effect;
  j["config"] = to_json(config);
  const auto& c = panel.coefficients;
  j["coefficients"] = {
      {"alpha", c.alpha}, {"lambda", c.lambda}, {"delta", c.delta}, {"omega", c.omega},
      {"beta", c.beta},   {"gamma", c.gamma},   {"mu_x", c.mu_x},   {"mu_u", c.mu_u},
      {"mu_s", c.mu_s},   {"c", c.c},
  };
  return j.dump(2) + "\n";
}

}  // namespace latentiv::datagen
