#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "latentiv/numkit.hpp"
#include "latentiv/panel.hpp"

namespace latentiv::factor {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  std::size_t hidden_units = 128;
  double learning_rate = 1e-3;
  // Probability of keeping a hidden unit under inverted dropout.
  double keep_probability = 0.8;
  std::size_t latent_dim = 1;
  std::uint64_t seed = 0;

  // Width of the tanh layer between the LSTM state and the latent; 0 maps the
  // hidden state to L_t directly.
  std::size_t fc_units = 128;
  // Feed W_{t-1} to the recurrence alongside X_{t-1}.
  bool include_treatment_input = false;
  double gradient_clip = 5.0;
  bool standardize = true;
  // Run minibatch forward/backward passes in float; parameters, optimizer
  // state and all evaluation outside training stay in double.
  bool single_precision = true;

  void validate() const;
};

struct ModelShape {
  std::size_t covariates = 0;  // k
  std::size_t hidden = 0;
  std::size_t fc_units = 0;
  std::size_t latent_dim = 1;
  bool include_treatment_input = false;

  std::size_t input_dim() const { return covariates + (include_treatment_input ? 1 : 0); }
  std::size_t head_input() const { return fc_units > 0 ? fc_units : hidden; }

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

// Per-covariate affine transform applied to X before it enters the model.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer identity(std::size_t k);
  static Standardizer fit(const TrajectoryPanel& panel);

  friend bool operator==(const Standardizer& a, const Standardizer& b) {
    return a.mean == b.mean && a.scale == b.scale;
  }
};

// All trainable tensors. Gate blocks are stacked in the order input, forget,
// output, candidate. The same struct holds gradients.
struct FactorParams {
  ModelShape shape;
  Matrix input_weights;      // 4H x input_dim
  Matrix recurrent_weights;  // 4H x H
  Vector gate_biases;        // 4H
  Vector psi_hidden;         // H, state at step 1
  Vector psi_cell;           // H
  Matrix fc_weights;         // F x H (empty when fc_units == 0)
  Vector fc_bias;            // F
  Matrix latent_weights;     // d_L x head_input
  Vector latent_bias;        // d_L
  Matrix emission_weights;   // k x d_L
  Vector emission_bias;      // k
  Vector log_sigma;          // k

  Standardizer standardizer;
  TrainConfig train_config;

  static FactorParams zeros(const ModelShape& shape);
  static FactorParams initialize(const ModelShape& shape, numkit::RngStream& rng);

  // Visits every trainable tensor as a flat span, in a fixed order.
  void for_each_tensor(const std::function<void(const std::string&, std::span<double>)>& fn);
  void for_each_tensor(
      const std::function<void(const std::string&, std::span<const double>)>& fn) const;

  std::size_t parameter_count() const;
  bool all_finite() const;
  std::uint64_t fingerprint() const;
};

struct ForwardResult {
  Matrix latents;          // T x d_L
  Matrix predicted_means;  // T x k (standardized covariate scale)
};

// Deterministic forward pass for one individual; no dropout.
ForwardResult forward(const FactorParams& params, const TrajectoryPanel& panel,
                       std::size_t individual);

// Mean over individuals of sum_t sum_j -log N(x_tj | g_j(L_t), sigma_j^2),
// evaluated on standardized covariates.
double negative_log_likelihood(const FactorParams& params, const TrajectoryPanel& batch);

struct LossAndGradient {
  double loss = 0.0;
  FactorParams gradient;
};

// Exact gradient of negative_log_likelihood by backpropagation through time.
LossAndGradient gradients(const FactorParams& params, const TrajectoryPanel& batch);

struct TrainResult {
  FactorParams params;
  std::vector<double> epoch_losses;  // mean minibatch loss (with dropout)
  double initial_loss = 0.0;         // full-panel NLL before the first update
  double final_loss = 0.0;           // full-panel NLL after the last update
};

TrainResult train(const TrajectoryPanel& panel, const TrainConfig& config);

LatentPanel infer_latents(const FactorParams& params, const TrajectoryPanel& panel);

// Versioned JSON checkpoint; doubles are written in shortest round-trip form.
std::string to_checkpoint_json(const FactorParams& params);
FactorParams from_checkpoint_json(const std::string& text);

namespace detail {

// Batched loss (and optionally gradient) over `individuals`, averaged over
// the batch. With keep_probability < 1 and a dropout stream, inverted dropout
// masks are applied to the hidden state feeding the latent head.
double evaluate(const FactorParams& params, const TrajectoryPanel& panel,
                std::span<const std::size_t> individuals, FactorParams* gradient,
                double keep_probability, numkit::RngStream* dropout_rng);

struct Workspace;

// evaluate() with buffers kept alive between calls.
class BatchEvaluator {
 public:
  BatchEvaluator();
  ~BatchEvaluator();
  BatchEvaluator(const BatchEvaluator&) = delete;
  BatchEvaluator& operator=(const BatchEvaluator&) = delete;

  double operator()(const FactorParams& params, const TrajectoryPanel& panel,
                    std::span<const std::size_t> individuals, FactorParams* gradient,
                    double keep_probability, numkit::RngStream* dropout_rng,
                    bool single_precision);

 private:
  std::unique_ptr<Workspace> workspace_;
};

}  // namespace detail

}  // namespace latentiv::factor
