#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace latentiv::numkit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Least squares
// ---------------------------------------------------------------------------

struct LeastSquaresOptions {
  // When false a design whose smallest singular value falls below
  // rank_tolerance * largest raises RankDeficient. When true the system is
  // solved with ridge penalty ridge_scale * sigma_max^2 instead.
  bool allow_ridge = false;
  double rank_tolerance = 1e-10;
  double ridge_scale = 1e-8;
};

struct LeastSquaresFit {
  Vector coefficients;
  bool ridge_used = false;
  double ridge_lambda = 0.0;
  // (X'X)^{-1}, or (X'X + lambda I)^{-1} when ridge was used.
  Matrix gram_inverse;
};

// Minimizes ||design * b - response||^2 through an orthogonal decomposition.
LeastSquaresFit fit_least_squares(const Matrix& design, const Vector& response,
                                  const LeastSquaresOptions& options = {});

Vector solve_least_squares(const Matrix& design, const Vector& response,
                           const LeastSquaresOptions& options = {});

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

// A reproducible stream identified by (seed, stream_id). Streams are derived,
// never advanced from a shared parent, so replicate k can be regenerated
// without drawing replicates 0..k-1 first.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  // A child stream keyed by `tag`; pure in (seed, stream_id, tag).
  RngStream split(std::uint64_t tag) const;

  double normal(double mean, double sd);
  double uniform();  // [0, 1)
  bool bernoulli(double probability);
  std::uint64_t next_u64();

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
};

// n i.i.d. N(mean, sd^2) draws. sd < 0 raises NegativeScale.
Vector gaussian(RngStream& rng, double mean, double sd, std::size_t n);

std::uint64_t mix64(std::uint64_t x);

}  // namespace latentiv::numkit
