#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "latentiv/error.hpp"
#include "latentiv/factor.hpp"

namespace latentiv::factor {

namespace {

constexpr std::uint64_t kInitTag = 11;
constexpr std::uint64_t kShuffleTag = 12;
constexpr std::uint64_t kDropoutTag = 13;

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEpsilon = 1e-8;

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::InvalidConfig, message);
}

// Adaptive moment estimation with bias correction over every tensor of a
// FactorParams, in for_each_tensor order.
class Adam {
 public:
  Adam(const FactorParams& params, double learning_rate) : lr_(learning_rate) {
    params.for_each_tensor([&](const std::string&, std::span<const double> v) {
      m_.emplace_back(v.size(), 0.0);
      v_.emplace_back(v.size(), 0.0);
    });
  }

  void step(FactorParams& params, const FactorParams& grad, double grad_scale) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    std::vector<std::span<const double>> grads;
    grad.for_each_tensor(
        [&](const std::string&, std::span<const double> g) { grads.push_back(g); });
    std::size_t k = 0;
    params.for_each_tensor([&](const std::string&, std::span<double> p) {
      auto& m = m_[k];
      auto& v = v_[k];
      const auto& g = grads[k];
      for (std::size_t q = 0; q < p.size(); ++q) {
        const double gq = g[q] * grad_scale;
        m[q] = kBeta1 * m[q] + (1.0 - kBeta1) * gq;
        v[q] = kBeta2 * v[q] + (1.0 - kBeta2) * gq * gq;
        p[q] -= lr_ * (m[q] / c1) / (std::sqrt(v[q] / c2) + kEpsilon);
      }
      ++k;
    });
  }

 private:
  double lr_;
  long t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

double global_norm(const FactorParams& grad) {
  double ss = 0.0;
  grad.for_each_tensor([&](const std::string&, std::span<const double> g) {
    for (double x : g) ss += x * x;
  });
  return std::sqrt(ss);
}

}  // namespace

void TrainConfig::validate() const {
  require(epochs >= 1, "epochs >= 1 required");
  require(batch_size >= 1, "batch_size >= 1 required");
  require(hidden_units >= 1, "hidden_units >= 1 required");
  require(latent_dim >= 1, "latent_dim >= 1 required");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate > 0 required");
  require(keep_probability > 0.0 && keep_probability <= 1.0, "keep_probability in (0, 1] required");
  require(gradient_clip > 0.0, "gradient_clip > 0 required");
}

TrainResult train(const TrajectoryPanel& panel, const TrainConfig& config) {
  config.validate();
  if (panel.n() == 0 || panel.t_steps() == 0) {
    throw Error(ErrorCode::InvalidConfig, "cannot train on an empty panel");
  }
  const ModelShape shape{panel.k(), config.hidden_units, config.fc_units, config.latent_dim,
                         config.include_treatment_input};
  const numkit::RngStream root(config.seed, 0);
  numkit::RngStream init_rng = root.split(kInitTag);
  numkit::RngStream shuffle_rng = root.split(kShuffleTag);
  numkit::RngStream dropout_rng = root.split(kDropoutTag);

  TrainResult result;
  result.params = FactorParams::initialize(shape, init_rng);
  result.params.standardizer =
      config.standardize ? Standardizer::fit(panel) : Standardizer::identity(panel.k());
  result.params.train_config = config;
  result.initial_loss = negative_log_likelihood(result.params, panel);

  // Batches larger than the panel are clipped to the panel.
  const std::size_t batch = std::min(config.batch_size, panel.n());
  std::vector<std::size_t> order(panel.n());
  std::iota(order.begin(), order.end(), 0);
  Adam adam(result.params, config.learning_rate);
  FactorParams grad;
  detail::BatchEvaluator evaluate;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++batch_index) {
      const std::size_t len = std::min(batch, order.size() - start);
      const auto members = std::span<const std::size_t>(order).subspan(start, len);
      double loss = 0.0;
      try {
        loss = evaluate(result.params, panel, members, &grad, config.keep_probability,
                          &dropout_rng, config.single_precision);
      } catch (const Error& e) {
        throw Error(e.code(), "epoch " + std::to_string(epoch + 1) + ", batch " +
                                  std::to_string(batch_index + 1) + ": " + e.what());
      }
      const double norm = global_norm(grad);
      const double scale = norm > config.gradient_clip ? config.gradient_clip / norm : 1.0;
      adam.step(result.params, grad, scale);
      epoch_loss += loss * static_cast<double>(len);
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));
    if (!result.params.all_finite()) {
      throw Error(ErrorCode::NonFiniteLoss,
                  "parameters diverged after epoch " + std::to_string(epoch + 1));
    }
  }
  result.final_loss = negative_log_likelihood(result.params, panel);
  return result;
}

}  // namespace latentiv::factor
