#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "latentiv/numkit.hpp"

namespace latentiv {

using numkit::Matrix;
using numkit::Vector;

// Observed longitudinal data for n individuals over t_steps steps with k
// covariates. Timesteps are 1-based in the public accessors. outcome(i, t)
// holds the outcome observed one step after treatment t (Y_{t+1}).
class TrajectoryPanel {
 public:
  TrajectoryPanel() = default;
  TrajectoryPanel(std::size_t n, std::size_t t_steps, std::size_t k);

  std::size_t n() const noexcept { return n_; }
  std::size_t t_steps() const noexcept { return t_steps_; }
  std::size_t k() const noexcept { return k_; }

  double& covariate(std::size_t i, std::size_t t, std::size_t j) {
    return covariates_[(i * t_steps_ + (t - 1)) * k_ + j];
  }
  double covariate(std::size_t i, std::size_t t, std::size_t j) const {
    return covariates_[(i * t_steps_ + (t - 1)) * k_ + j];
  }
  double& treatment(std::size_t i, std::size_t t) { return treatments_[i * t_steps_ + (t - 1)]; }
  double treatment(std::size_t i, std::size_t t) const {
    return treatments_[i * t_steps_ + (t - 1)];
  }
  double& outcome(std::size_t i, std::size_t t) { return outcomes_[i * t_steps_ + (t - 1)]; }
  double outcome(std::size_t i, std::size_t t) const { return outcomes_[i * t_steps_ + (t - 1)]; }

  // Cross sections at step t.
  Matrix covariates_at(std::size_t t) const;  // n x k
  Vector treatments_at(std::size_t t) const;
  Vector outcomes_at(std::size_t t) const;

  // Sub-panel with the listed individuals, in the listed order.
  TrajectoryPanel select(const std::vector<std::size_t>& individuals) const;

  bool all_finite() const;
  std::uint64_t fingerprint() const;

  friend bool operator==(const TrajectoryPanel&, const TrajectoryPanel&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t t_steps_ = 0;
  std::size_t k_ = 0;
  std::vector<double> covariates_;
  std::vector<double> treatments_;
  std::vector<double> outcomes_;
};

// Inferred (or oracle) instrument values per individual per step.
class LatentPanel {
 public:
  LatentPanel() = default;
  LatentPanel(std::size_t n, std::size_t t_steps, std::size_t dim);

  std::size_t n() const noexcept { return n_; }
  std::size_t t_steps() const noexcept { return t_steps_; }
  std::size_t dim() const noexcept { return dim_; }

  double& at(std::size_t i, std::size_t t, std::size_t d) {
    return values_[(i * t_steps_ + (t - 1)) * dim_ + d];
  }
  double at(std::size_t i, std::size_t t, std::size_t d) const {
    return values_[(i * t_steps_ + (t - 1)) * dim_ + d];
  }

  Matrix at_step(std::size_t t) const;  // n x dim

  std::uint64_t source_fingerprint = 0;

  friend bool operator==(const LatentPanel&, const LatentPanel&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t t_steps_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

// FNV-1a over raw bytes; used for panel and parameter fingerprints.
std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace latentiv
