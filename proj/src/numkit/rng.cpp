#include "latentiv/numkit.hpp"

#include <string>

#include "latentiv/error.hpp"

namespace latentiv::numkit {

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream_id),
                    static_cast<std::uint32_t>(stream_id >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

RngStream RngStream::split(std::uint64_t tag) const {
  return RngStream(seed_, mix64(stream_id_ ^ mix64(tag + 0x632be59bd9b4e019ULL)));
}

double RngStream::normal(double mean, double sd) {
  if (sd < 0.0) {
    throw Error(ErrorCode::NegativeScale, "normal sd " + std::to_string(sd) + " < 0");
  }
  if (sd == 0.0) return mean;
  std::normal_distribution<double> dist(mean, sd);
  return dist(engine_);
}

double RngStream::uniform() {
  return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

bool RngStream::bernoulli(double probability) { return uniform() < probability; }

std::uint64_t RngStream::next_u64() { return engine_(); }

Vector gaussian(RngStream& rng, double mean, double sd, std::size_t n) {
  if (sd < 0.0) {
    throw Error(ErrorCode::NegativeScale, "gaussian sd " + std::to_string(sd) + " < 0");
  }
  Vector out(static_cast<Eigen::Index>(n));
  if (sd == 0.0) {
    out.setConstant(mean);
    return out;
  }
  std::normal_distribution<double> dist(mean, sd);
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = dist(rng.engine());
  return out;
}

}  // namespace latentiv::numkit
