#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "latentiv/datagen.hpp"
#include "latentiv/factor.hpp"
#include "latentiv/numkit.hpp"
#include "latentiv/panel.hpp"

namespace testing {

using latentiv::LatentPanel;
using latentiv::TrajectoryPanel;
namespace factor = latentiv::factor;
namespace numkit = latentiv::numkit;

inline TrajectoryPanel random_panel(std::size_t n, std::size_t t, std::size_t k, std::uint64_t seed) {
  numkit::RngStream rng(seed, 99);
  TrajectoryPanel panel(n, t, k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 1; s <= t; ++s) {
      for (std::size_t j = 0; j < k; ++j) panel.covariate(i, s, j) = rng.normal(0.3 * j, 1.0 + j);
      panel.treatment(i, s) = rng.bernoulli(0.5) ? 1.0 : 0.0;
      panel.outcome(i, s) = rng.normal(0.0, 1.0);
    }
  }
  return panel;
}

// Every tensor filled with N(0, scale^2) so that no coordinate sits at a
// structural zero; log_sigma kept moderate.
inline factor::FactorParams random_params(const factor::ModelShape& shape, std::uint64_t seed,
                                          double scale = 0.5) {
  numkit::RngStream rng(seed, 7);
  auto params = factor::FactorParams::zeros(shape);
  params.for_each_tensor([&](const std::string& name, std::span<double> v) {
    for (double& x : v) x = name == "log_sigma" ? rng.normal(0.0, 0.3) : rng.normal(0.0, scale);
  });
  params.standardizer.mean = numkit::Vector::Zero(static_cast<Eigen::Index>(shape.covariates));
  params.standardizer.scale = numkit::Vector::Ones(static_cast<Eigen::Index>(shape.covariates));
  for (std::size_t j = 0; j < shape.covariates; ++j) {
    params.standardizer.mean(static_cast<Eigen::Index>(j)) = 0.1 * static_cast<double>(j);
    params.standardizer.scale(static_cast<Eigen::Index>(j)) = 1.0 + 0.5 * static_cast<double>(j);
  }
  return params;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Straight-line evaluation of the factor-model likelihood: plain loops, no
// Eigen expressions, no shared code with the library's batched pass.
// Returns per-covariate NLL sums (mean over individuals); the total is their sum.
inline std::vector<double> naive_nll_terms(const factor::FactorParams& p, const TrajectoryPanel& panel) {
  const std::size_t H = p.shape.hidden, k = p.shape.covariates, F = p.shape.fc_units,
                    D = p.shape.latent_dim, in = p.shape.input_dim();
  const double half_log_2pi = 0.5 * std::log(2.0 * M_PI);
  std::vector<double> terms(k, 0.0);
  for (std::size_t i = 0; i < panel.n(); ++i) {
    std::vector<double> h(H), c(H);
    for (std::size_t u = 0; u < H; ++u) {
      h[u] = p.psi_hidden(static_cast<Eigen::Index>(u));
      c[u] = p.psi_cell(static_cast<Eigen::Index>(u));
    }
    for (std::size_t t = 1; t <= panel.t_steps(); ++t) {
      if (t >= 2) {
        std::vector<double> x(in);
        for (std::size_t j = 0; j < k; ++j) {
          x[j] = (panel.covariate(i, t - 1, j) - p.standardizer.mean(static_cast<Eigen::Index>(j))) /
                 p.standardizer.scale(static_cast<Eigen::Index>(j));
        }
        if (p.shape.include_treatment_input) x[k] = panel.treatment(i, t - 1);
        std::vector<double> z(4 * H);
        for (std::size_t r = 0; r < 4 * H; ++r) {
          double acc = p.gate_biases(static_cast<Eigen::Index>(r));
          for (std::size_t q = 0; q < in; ++q)
            acc += p.input_weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)) * x[q];
          for (std::size_t q = 0; q < H; ++q)
            acc += p.recurrent_weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)) * h[q];
          z[r] = acc;
        }
        for (std::size_t u = 0; u < H; ++u) {
          const double ig = sigmoid(z[u]), fg = sigmoid(z[H + u]), og = sigmoid(z[2 * H + u]);
          const double g = std::tanh(z[3 * H + u]);
          c[u] = fg * c[u] + ig * g;
          h[u] = og * std::tanh(c[u]);
        }
      }
      std::vector<double> head(h);
      if (F > 0) {
        head.assign(F, 0.0);
        for (std::size_t r = 0; r < F; ++r) {
          double acc = p.fc_bias(static_cast<Eigen::Index>(r));
          for (std::size_t q = 0; q < H; ++q)
            acc += p.fc_weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)) * h[q];
          head[r] = std::tanh(acc);
        }
      }
      std::vector<double> lat(D);
      for (std::size_t d = 0; d < D; ++d) {
        double acc = p.latent_bias(static_cast<Eigen::Index>(d));
        for (std::size_t q = 0; q < head.size(); ++q)
          acc += p.latent_weights(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(q)) * head[q];
        lat[d] = acc;
      }
      for (std::size_t j = 0; j < k; ++j) {
        double mean = p.emission_bias(static_cast<Eigen::Index>(j));
        for (std::size_t d = 0; d < D; ++d)
          mean += p.emission_weights(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(d)) * lat[d];
        const double x = (panel.covariate(i, t, j) - p.standardizer.mean(static_cast<Eigen::Index>(j))) /
                         p.standardizer.scale(static_cast<Eigen::Index>(j));
        const double ls = p.log_sigma(static_cast<Eigen::Index>(j));
        const double r = x - mean;
        terms[j] += ls + r * r / (2.0 * std::exp(2.0 * ls)) + half_log_2pi;
      }
    }
  }
  for (double& v : terms) v /= static_cast<double>(panel.n());
  return terms;
}

inline double naive_nll(const factor::FactorParams& p, const TrajectoryPanel& panel) {
  double total = 0.0;
  for (double v : naive_nll_terms(p, panel)) total += v;
  return total;
}

// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("latentiv_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline latentiv::datagen::SimConfig small_sim(std::size_t n = 400, std::size_t t = 6) {
  latentiv::datagen::SimConfig c;
  c.n_individuals = n;
  c.t_steps = t;
  c.master_seed = 11;
  return c;
}

}  // namespace testing
