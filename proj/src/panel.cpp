#include "latentiv/panel.hpp"

#include <cmath>

namespace latentiv {

TrajectoryPanel::TrajectoryPanel(std::size_t n, std::size_t t_steps, std::size_t k)
    : n_(n),
      t_steps_(t_steps),
      k_(k),
      covariates_(n * t_steps * k, 0.0),
      treatments_(n * t_steps, 0.0),
      outcomes_(n * t_steps, 0.0) {}

Matrix TrajectoryPanel::covariates_at(std::size_t t) const {
  Matrix x(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(k_));
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < k_; ++j) x(i, j) = covariate(i, t, j);
  return x;
}

Vector TrajectoryPanel::treatments_at(std::size_t t) const {
  Vector w(static_cast<Eigen::Index>(n_));
  for (std::size_t i = 0; i < n_; ++i) w(i) = treatment(i, t);
  return w;
}

Vector TrajectoryPanel::outcomes_at(std::size_t t) const {
  Vector y(static_cast<Eigen::Index>(n_));
  for (std::size_t i = 0; i < n_; ++i) y(i) = outcome(i, t);
  return y;
}

TrajectoryPanel TrajectoryPanel::select(const std::vector<std::size_t>& individuals) const {
  TrajectoryPanel out(individuals.size(), t_steps_, k_);
  for (std::size_t r = 0; r < individuals.size(); ++r) {
    const std::size_t i = individuals[r];
    for (std::size_t t = 1; t <= t_steps_; ++t) {
      for (std::size_t j = 0; j < k_; ++j) out.covariate(r, t, j) = covariate(i, t, j);
      out.treatment(r, t) = treatment(i, t);
      out.outcome(r, t) = outcome(i, t);
    }
  }
  return out;
}

bool TrajectoryPanel::all_finite() const {
  auto finite = [](const std::vector<double>& v) {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  };
  return finite(covariates_) && finite(treatments_) && finite(outcomes_);
}

std::uint64_t TrajectoryPanel::fingerprint() const {
  const std::uint64_t dims[3] = {n_, t_steps_, k_};
  std::uint64_t h = fnv1a(dims, sizeof(dims));
  h = fnv1a(covariates_.data(), covariates_.size() * sizeof(double), h);
  h = fnv1a(treatments_.data(), treatments_.size() * sizeof(double), h);
  return fnv1a(outcomes_.data(), outcomes_.size() * sizeof(double), h);
}

LatentPanel::LatentPanel(std::size_t n, std::size_t t_steps, std::size_t dim)
    : n_(n), t_steps_(t_steps), dim_(dim), values_(n * t_steps * dim, 0.0) {}

Matrix LatentPanel::at_step(std::size_t t) const {
  Matrix l(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t d = 0; d < dim_; ++d) l(i, d) = at(i, t, d);
  return l;
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace latentiv
