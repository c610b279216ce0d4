#include <algorithm>
#include <cmath>
#include <string>

#include "latentiv/error.hpp"
#include "latentiv/factor.hpp"

namespace latentiv::factor {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)
constexpr std::size_t kChunk = 1024;

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using Arr = Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic>;

// Eigen's packet exp is vectorized for double, its tanh is not.
template <typename Derived>
auto fast_tanh(const Eigen::ArrayBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return S(1) - S(2) / ((S(2) * x).exp() + S(1));
}

void fill_uniform(Matrix& m, numkit::RngStream& rng, double limit) {
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = limit * (2.0 * rng.uniform() - 1.0);
}

double glorot(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

// Inverted-dropout mask with entries 0 or 1/keep. Four 16-bit draws per call
// to the engine.
template <typename S>
void dropout_mask(Mat<S>& mask, Eigen::Index rows, Eigen::Index cols, double keep,
                  numkit::RngStream& rng) {
  mask.resize(rows, cols);
  const auto threshold = static_cast<std::uint64_t>(keep * 65536.0);
  const S scale = static_cast<S>(1.0 / keep);
  S* data = mask.data();
  const Eigen::Index total = mask.size();
  std::uint64_t bits = 0;
  for (Eigen::Index idx = 0; idx < total; ++idx) {
    if (idx % 4 == 0) bits = rng.next_u64();
    const std::uint64_t draw = bits & 0xffffULL;
    bits >>= 16;
    data[idx] = draw < threshold ? scale : S(0);
  }
}

void check_panel(const FactorParams& params, const TrajectoryPanel& panel) {
  if (panel.k() != params.shape.covariates) {
    throw Error(ErrorCode::DimensionMismatch,
                "panel has " + std::to_string(panel.k()) + " covariates, model expects " +
                    std::to_string(params.shape.covariates));
  }
  if (params.standardizer.mean.size() != static_cast<Eigen::Index>(panel.k()) ||
      params.standardizer.scale.size() != static_cast<Eigen::Index>(panel.k())) {
    throw Error(ErrorCode::DimensionMismatch, "standardizer does not match covariate count");
  }
  if (panel.t_steps() == 0) throw Error(ErrorCode::DimensionMismatch, "panel has no timesteps");
}

// Buffers for one batch evaluation in scalar type S, reused across calls so
// the training loop does not reallocate per step.
template <typename S>
struct Buffers {
  Eigen::Index batch = -1;
  std::size_t steps = 0;
  ModelShape shape;
  std::vector<Mat<S>> xs;       // k x B standardized targets
  std::vector<Mat<S>> stacked;  // [input_{s-1}; h_{s-1}], recurrence operand at step s
  std::vector<Mat<S>> hs, cs, gates, head_in, acts, lat, resid, masks;
  // Weights cast to S; joint = [input_weights | recurrent_weights].
  Mat<S> joint, recurrent, fc, latent, emission;
  Vec<S> gate_bias, fc_bias, latent_bias, emission_bias, inv_var;
  // Gradient accumulators.
  Mat<S> g_joint, g_fc, g_latent, g_emission;
  Vec<S> g_gate_bias, g_fc_bias, g_latent_bias, g_emission_bias, g_log_sigma;
  Mat<S> z, dz, dh, dh_next, dc_next, dhead, dpre, dlat, dmean, mean;

  void prepare(const ModelShape& model, Eigen::Index b, std::size_t t_steps) {
    if (b == batch && t_steps == steps && model == shape) return;
    shape = model;
    batch = b;
    steps = t_steps;
    const auto H = static_cast<Eigen::Index>(model.hidden);
    const auto k = static_cast<Eigen::Index>(model.covariates);
    const auto in = static_cast<Eigen::Index>(model.input_dim());
    xs.assign(steps, Mat<S>(k, b));
    stacked.assign(steps, Mat<S>(in + H, b));
    hs.assign(steps, Mat<S>(H, b));
    cs.assign(steps, Mat<S>(H, b));
    gates.assign(steps, Mat<S>(4 * H, b));
    head_in.assign(steps, Mat<S>(H, b));
    acts.assign(steps, Mat<S>());
    lat.assign(steps, Mat<S>());
    resid.assign(steps, Mat<S>(k, b));
    masks.assign(steps, Mat<S>());
  }
};

}  // namespace

struct detail::Workspace {
  Buffers<double> wide;
  Buffers<float> narrow;
};

namespace {

using detail::Workspace;

// Shared forward/backward in scalar type S; parameters and the returned loss
// and gradient stay in double. When latents_out is set it receives one
// d_L x B matrix per step; means_out likewise k x B.
template <typename S>
double run(const FactorParams& params, const TrajectoryPanel& panel,
           std::span<const std::size_t> individuals, FactorParams* gradient,
           double keep_probability, numkit::RngStream* dropout_rng,
           std::vector<Matrix>* latents_out, std::vector<Matrix>* means_out, Buffers<S>& ws) {
  check_panel(params, panel);
  const ModelShape& shape = params.shape;
  const auto B = static_cast<Eigen::Index>(individuals.size());
  if (B == 0) throw Error(ErrorCode::InvalidConfig, "empty batch");
  const std::size_t steps = panel.t_steps();
  const auto H = static_cast<Eigen::Index>(shape.hidden);
  const auto k = static_cast<Eigen::Index>(shape.covariates);
  const auto in_dim = static_cast<Eigen::Index>(shape.input_dim());
  const bool has_fc = shape.fc_units > 0;
  const bool dropout = dropout_rng != nullptr && keep_probability < 1.0;
  ws.prepare(shape, B, steps);

  for (std::size_t s = 0; s < steps; ++s) {
    Mat<S>& x = ws.xs[s];
    for (Eigen::Index b = 0; b < B; ++b) {
      const std::size_t i = individuals[static_cast<std::size_t>(b)];
      for (Eigen::Index j = 0; j < k; ++j) {
        x(j, b) = static_cast<S>((panel.covariate(i, s + 1, static_cast<std::size_t>(j)) -
                                  params.standardizer.mean(j)) /
                                 params.standardizer.scale(j));
      }
    }
    if (s + 1 < steps) {
      Mat<S>& next = ws.stacked[s + 1];
      next.topRows(k) = x;
      if (shape.include_treatment_input) {
        for (Eigen::Index b = 0; b < B; ++b)
          next(k, b) = static_cast<S>(
              panel.treatment(individuals[static_cast<std::size_t>(b)], s + 1));
      }
    }
  }
  ws.joint.resize(4 * H, in_dim + H);
  ws.joint << params.input_weights.cast<S>(), params.recurrent_weights.cast<S>();
  ws.recurrent = params.recurrent_weights.cast<S>();
  ws.fc = params.fc_weights.cast<S>();
  ws.latent = params.latent_weights.cast<S>();
  ws.emission = params.emission_weights.cast<S>();
  ws.gate_bias = params.gate_biases.cast<S>();
  ws.fc_bias = params.fc_bias.cast<S>();
  ws.latent_bias = params.latent_bias.cast<S>();
  ws.emission_bias = params.emission_bias.cast<S>();
  ws.inv_var = (-2.0 * params.log_sigma.array()).exp().matrix().cast<S>();
  const double log_sigma_sum = params.log_sigma.sum();

  double weighted_sq = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    if (s == 0) {
      ws.hs[0] = params.psi_hidden.cast<S>().replicate(1, B);
      ws.cs[0] = params.psi_cell.cast<S>().replicate(1, B);
    } else {
      Mat<S>& op = ws.stacked[s];
      op.bottomRows(H) = ws.hs[s - 1];
      ws.z.noalias() = ws.joint * op;
      ws.z.colwise() += ws.gate_bias;
      Mat<S>& g = ws.gates[s];
      g.topRows(3 * H) = (S(1) / (S(1) + (-ws.z.topRows(3 * H).array()).exp())).matrix();
      g.bottomRows(H) = fast_tanh(ws.z.bottomRows(H).array()).matrix();
      ws.cs[s] = (g.middleRows(H, H).array() * ws.cs[s - 1].array() +
                  g.topRows(H).array() * g.bottomRows(H).array())
                     .matrix();
      ws.hs[s] = (g.middleRows(2 * H, H).array() * fast_tanh(ws.cs[s].array())).matrix();
    }

    if (dropout) {
      dropout_mask(ws.masks[s], H, B, keep_probability, *dropout_rng);
      ws.head_in[s] = (ws.hs[s].array() * ws.masks[s].array()).matrix();
    } else {
      ws.head_in[s] = ws.hs[s];
    }
    if (has_fc) {
      ws.z.noalias() = ws.fc * ws.head_in[s];
      ws.z.colwise() += ws.fc_bias;
      ws.acts[s] = fast_tanh(ws.z.array()).matrix();
      ws.lat[s].noalias() = ws.latent * ws.acts[s];
    } else {
      ws.lat[s].noalias() = ws.latent * ws.head_in[s];
    }
    ws.lat[s].colwise() += ws.latent_bias;

    ws.mean.noalias() = ws.emission * ws.lat[s];
    ws.mean.colwise() += ws.emission_bias;
    ws.resid[s] = ws.xs[s] - ws.mean;
    weighted_sq += static_cast<double>(
        (ws.resid[s].array().square().colwise() * ws.inv_var.array()).sum());

    if (latents_out != nullptr) latents_out->push_back(ws.lat[s].template cast<double>());
    if (means_out != nullptr) means_out->push_back(ws.mean.template cast<double>());
  }
  const double inv_b = 1.0 / static_cast<double>(B);
  const double loss =
      (0.5 * weighted_sq) * inv_b +
      static_cast<double>(steps) * (log_sigma_sum + kHalfLog2Pi * static_cast<double>(k));
  if (!std::isfinite(loss)) {
    throw Error(ErrorCode::NonFiniteLoss, "negative log-likelihood is not finite");
  }
  if (gradient == nullptr) return loss;

  const S scale = static_cast<S>(inv_b);
  const auto F = static_cast<Eigen::Index>(shape.fc_units);
  const auto D = static_cast<Eigen::Index>(shape.latent_dim);
  ws.g_joint = Mat<S>::Zero(4 * H, in_dim + H);
  ws.g_fc = Mat<S>::Zero(F, has_fc ? H : 0);
  ws.g_latent = Mat<S>::Zero(D, static_cast<Eigen::Index>(shape.head_input()));
  ws.g_emission = Mat<S>::Zero(k, D);
  ws.g_gate_bias = Vec<S>::Zero(4 * H);
  ws.g_fc_bias = Vec<S>::Zero(F);
  ws.g_latent_bias = Vec<S>::Zero(D);
  ws.g_emission_bias = Vec<S>::Zero(k);
  ws.g_log_sigma = Vec<S>::Zero(k);
  ws.dh_next = Mat<S>::Zero(H, B);
  ws.dc_next = Mat<S>::Zero(H, B);

  FactorParams& grad = *gradient;
  grad = FactorParams::zeros(shape);
  for (std::size_t s = steps; s-- > 0;) {
    const Mat<S>& r = ws.resid[s];
    ws.dmean = -(r.array().colwise() * ws.inv_var.array()).matrix() * scale;
    ws.g_log_sigma.array() +=
        (S(1) - (r.array().square().colwise() * ws.inv_var.array())).rowwise().sum() * scale;
    ws.g_emission.noalias() += ws.dmean * ws.lat[s].transpose();
    ws.g_emission_bias += ws.dmean.rowwise().sum();
    ws.dlat.noalias() = ws.emission.transpose() * ws.dmean;

    const Mat<S>& head_source = has_fc ? ws.acts[s] : ws.head_in[s];
    ws.g_latent.noalias() += ws.dlat * head_source.transpose();
    ws.g_latent_bias += ws.dlat.rowwise().sum();
    ws.dhead.noalias() = ws.latent.transpose() * ws.dlat;
    if (has_fc) {
      ws.dpre = (ws.dhead.array() * (S(1) - ws.acts[s].array().square())).matrix();
      ws.g_fc.noalias() += ws.dpre * ws.head_in[s].transpose();
      ws.g_fc_bias += ws.dpre.rowwise().sum();
      ws.dhead.noalias() = ws.fc.transpose() * ws.dpre;
    }
    if (dropout) ws.dhead.array() *= ws.masks[s].array();
    ws.dh = ws.dhead + ws.dh_next;

    if (s == 0) {
      grad.psi_hidden = ws.dh.rowwise().sum().template cast<double>();
      grad.psi_cell = ws.dc_next.rowwise().sum().template cast<double>();
      break;
    }

    const Mat<S>& g = ws.gates[s];
    const auto i_gate = g.topRows(H).array();
    const auto f_gate = g.middleRows(H, H).array();
    const auto o_gate = g.middleRows(2 * H, H).array();
    const auto cand = g.bottomRows(H).array();
    const Arr<S> tanh_c = fast_tanh(ws.cs[s].array());

    const Arr<S> dc = ws.dh.array() * o_gate * (S(1) - tanh_c.square()) + ws.dc_next.array();
    ws.dz.resize(4 * H, B);
    ws.dz.topRows(H) = (dc * cand * i_gate * (S(1) - i_gate)).matrix();
    ws.dz.middleRows(H, H) = (dc * ws.cs[s - 1].array() * f_gate * (S(1) - f_gate)).matrix();
    ws.dz.middleRows(2 * H, H) = (ws.dh.array() * tanh_c * o_gate * (S(1) - o_gate)).matrix();
    ws.dz.bottomRows(H) = (dc * i_gate * (S(1) - cand.square())).matrix();

    ws.g_joint.noalias() += ws.dz * ws.stacked[s].transpose();
    ws.g_gate_bias += ws.dz.rowwise().sum();
    ws.dh_next.noalias() = ws.recurrent.transpose() * ws.dz;
    ws.dc_next = (dc * f_gate).matrix();
  }
  grad.input_weights = ws.g_joint.leftCols(in_dim).template cast<double>();
  grad.recurrent_weights = ws.g_joint.rightCols(H).template cast<double>();
  grad.gate_biases = ws.g_gate_bias.template cast<double>();
  grad.fc_weights = ws.g_fc.template cast<double>();
  grad.fc_bias = ws.g_fc_bias.template cast<double>();
  grad.latent_weights = ws.g_latent.template cast<double>();
  grad.latent_bias = ws.g_latent_bias.template cast<double>();
  grad.emission_weights = ws.g_emission.template cast<double>();
  grad.emission_bias = ws.g_emission_bias.template cast<double>();
  grad.log_sigma = ws.g_log_sigma.template cast<double>();
  if (!grad.all_finite()) {
    throw Error(ErrorCode::NonFiniteGradient, "gradient contains non-finite entries");
  }
  return loss;
}

double run(const FactorParams& params, const TrajectoryPanel& panel,
           std::span<const std::size_t> individuals, FactorParams* gradient,
           double keep_probability, numkit::RngStream* dropout_rng,
           std::vector<Matrix>* latents_out, std::vector<Matrix>* means_out) {
  Buffers<double> ws;
  return run<double>(params, panel, individuals, gradient, keep_probability, dropout_rng,
                     latents_out, means_out, ws);
}

std::vector<std::size_t> all_individuals(const TrajectoryPanel& panel) {
  std::vector<std::size_t> idx(panel.n());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

void axpy(FactorParams& acc, const FactorParams& x, double weight) {
  std::vector<std::span<const double>> sources;
  x.for_each_tensor([&](const std::string&, std::span<const double> v) { sources.push_back(v); });
  std::size_t t = 0;
  acc.for_each_tensor([&](const std::string&, std::span<double> v) {
    const auto& src = sources[t++];
    for (std::size_t q = 0; q < v.size(); ++q) v[q] += weight * src[q];
  });
}

}  // namespace

// ---------------------------------------------------------------------------

Standardizer Standardizer::identity(std::size_t k) {
  return {Vector::Zero(static_cast<Eigen::Index>(k)), Vector::Ones(static_cast<Eigen::Index>(k))};
}

Standardizer Standardizer::fit(const TrajectoryPanel& panel) {
  const std::size_t k = panel.k();
  Standardizer s = identity(k);
  const double count = static_cast<double>(panel.n() * panel.t_steps());
  if (count == 0.0) return s;
  for (std::size_t j = 0; j < k; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < panel.n(); ++i)
      for (std::size_t t = 1; t <= panel.t_steps(); ++t) sum += panel.covariate(i, t, j);
    const double mean = sum / count;
    double ss = 0.0;
    for (std::size_t i = 0; i < panel.n(); ++i)
      for (std::size_t t = 1; t <= panel.t_steps(); ++t) {
        const double d = panel.covariate(i, t, j) - mean;
        ss += d * d;
      }
    const double sd = std::sqrt(ss / count);
    s.mean(j) = mean;
    s.scale(j) = sd > 0.0 && std::isfinite(sd) ? sd : 1.0;
  }
  return s;
}

FactorParams FactorParams::zeros(const ModelShape& shape) {
  if (shape.latent_dim < 1) throw Error(ErrorCode::InvalidConfig, "latent_dim >= 1 required");
  if (shape.hidden < 1) throw Error(ErrorCode::InvalidConfig, "hidden_units >= 1 required");
  if (shape.covariates < 1) throw Error(ErrorCode::InvalidConfig, "at least one covariate required");
  const auto H = static_cast<Eigen::Index>(shape.hidden);
  const auto F = static_cast<Eigen::Index>(shape.fc_units);
  const auto D = static_cast<Eigen::Index>(shape.latent_dim);
  const auto k = static_cast<Eigen::Index>(shape.covariates);
  FactorParams p;
  p.shape = shape;
  p.input_weights = Matrix::Zero(4 * H, static_cast<Eigen::Index>(shape.input_dim()));
  p.recurrent_weights = Matrix::Zero(4 * H, H);
  p.gate_biases = Vector::Zero(4 * H);
  p.psi_hidden = Vector::Zero(H);
  p.psi_cell = Vector::Zero(H);
  p.fc_weights = Matrix::Zero(F, F > 0 ? H : 0);
  p.fc_bias = Vector::Zero(F);
  p.latent_weights = Matrix::Zero(D, static_cast<Eigen::Index>(shape.head_input()));
  p.latent_bias = Vector::Zero(D);
  p.emission_weights = Matrix::Zero(k, D);
  p.emission_bias = Vector::Zero(k);
  p.log_sigma = Vector::Zero(k);
  p.standardizer = Standardizer::identity(shape.covariates);
  return p;
}

FactorParams FactorParams::initialize(const ModelShape& shape, numkit::RngStream& rng) {
  FactorParams p = zeros(shape);
  const std::size_t H = shape.hidden;
  const double gate_limit = glorot(shape.input_dim() + H, 4 * H);
  fill_uniform(p.input_weights, rng, gate_limit);
  fill_uniform(p.recurrent_weights, rng, gate_limit);
  p.gate_biases.segment(static_cast<Eigen::Index>(H), static_cast<Eigen::Index>(H)).setOnes();
  for (Eigen::Index h = 0; h < p.psi_hidden.size(); ++h) p.psi_hidden(h) = rng.normal(0.0, 0.1);
  for (Eigen::Index h = 0; h < p.psi_cell.size(); ++h) p.psi_cell(h) = rng.normal(0.0, 0.1);
  if (shape.fc_units > 0) fill_uniform(p.fc_weights, rng, glorot(H, shape.fc_units));
  fill_uniform(p.latent_weights, rng, glorot(shape.head_input(), shape.latent_dim));
  fill_uniform(p.emission_weights, rng, glorot(shape.latent_dim, shape.covariates));
  return p;
}

void FactorParams::for_each_tensor(
    const std::function<void(const std::string&, std::span<double>)>& fn) {
  auto visit = [&](const char* name, auto& t) { fn(name, std::span<double>(t.data(), t.size())); };
  visit("input_weights", input_weights);
  visit("recurrent_weights", recurrent_weights);
  visit("gate_biases", gate_biases);
  visit("psi_hidden", psi_hidden);
  visit("psi_cell", psi_cell);
  visit("fc_weights", fc_weights);
  visit("fc_bias", fc_bias);
  visit("latent_weights", latent_weights);
  visit("latent_bias", latent_bias);
  visit("emission_weights", emission_weights);
  visit("emission_bias", emission_bias);
  visit("log_sigma", log_sigma);
}

void FactorParams::for_each_tensor(
    const std::function<void(const std::string&, std::span<const double>)>& fn) const {
  const_cast<FactorParams*>(this)->for_each_tensor(
      [&](const std::string& name, std::span<double> v) {
        fn(name, std::span<const double>(v.data(), v.size()));
      });
}

std::size_t FactorParams::parameter_count() const {
  std::size_t total = 0;
  for_each_tensor([&](const std::string&, std::span<const double> v) { total += v.size(); });
  return total;
}

bool FactorParams::all_finite() const {
  bool ok = true;
  for_each_tensor([&](const std::string&, std::span<const double> v) {
    for (double x : v) ok = ok && std::isfinite(x);
  });
  return ok;
}

std::uint64_t FactorParams::fingerprint() const {
  const std::uint64_t dims[5] = {shape.covariates, shape.hidden, shape.fc_units, shape.latent_dim,
                                 shape.include_treatment_input ? 1ULL : 0ULL};
  std::uint64_t h = fnv1a(dims, sizeof(dims));
  for_each_tensor([&](const std::string&, std::span<const double> v) {
    h = fnv1a(v.data(), v.size_bytes(), h);
  });
  h = fnv1a(standardizer.mean.data(), sizeof(double) * standardizer.mean.size(), h);
  return fnv1a(standardizer.scale.data(), sizeof(double) * standardizer.scale.size(), h);
}

// ---------------------------------------------------------------------------

ForwardResult forward(const FactorParams& params, const TrajectoryPanel& panel,
                      std::size_t individual) {
  if (individual >= panel.n()) {
    throw Error(ErrorCode::DimensionMismatch, "individual index out of range");
  }
  const std::size_t one[1] = {individual};
  std::vector<Matrix> lat, means;
  run(params, panel, one, nullptr, 1.0, nullptr, &lat, &means);
  ForwardResult out;
  const auto steps = static_cast<Eigen::Index>(panel.t_steps());
  out.latents.resize(steps, static_cast<Eigen::Index>(params.shape.latent_dim));
  out.predicted_means.resize(steps, static_cast<Eigen::Index>(params.shape.covariates));
  for (Eigen::Index s = 0; s < steps; ++s) {
    out.latents.row(s) = lat[static_cast<std::size_t>(s)].col(0).transpose();
    out.predicted_means.row(s) = means[static_cast<std::size_t>(s)].col(0).transpose();
  }
  return out;
}

double negative_log_likelihood(const FactorParams& params, const TrajectoryPanel& batch) {
  const auto idx = all_individuals(batch);
  if (idx.empty()) throw Error(ErrorCode::InvalidConfig, "empty batch");
  double total = 0.0;
  for (std::size_t start = 0; start < idx.size(); start += kChunk) {
    const std::size_t len = std::min(kChunk, idx.size() - start);
    const double part = run(params, batch, std::span(idx).subspan(start, len), nullptr, 1.0,
                            nullptr, nullptr, nullptr);
    total += part * static_cast<double>(len);
  }
  return total / static_cast<double>(idx.size());
}

LossAndGradient gradients(const FactorParams& params, const TrajectoryPanel& batch) {
  const auto idx = all_individuals(batch);
  if (idx.empty()) throw Error(ErrorCode::InvalidConfig, "empty batch");
  LossAndGradient out;
  out.gradient = FactorParams::zeros(params.shape);
  FactorParams part_grad;
  const double n = static_cast<double>(idx.size());
  for (std::size_t start = 0; start < idx.size(); start += kChunk) {
    const std::size_t len = std::min(kChunk, idx.size() - start);
    const double w = static_cast<double>(len) / n;
    out.loss += w * run(params, batch, std::span(idx).subspan(start, len), &part_grad, 1.0,
                        nullptr, nullptr, nullptr);
    axpy(out.gradient, part_grad, w);
  }
  return out;
}

LatentPanel infer_latents(const FactorParams& params, const TrajectoryPanel& panel) {
  check_panel(params, panel);
  const std::size_t dim = params.shape.latent_dim;
  LatentPanel out(panel.n(), panel.t_steps(), dim);
  const auto idx = all_individuals(panel);
  for (std::size_t start = 0; start < idx.size(); start += kChunk) {
    const std::size_t len = std::min(kChunk, idx.size() - start);
    std::vector<Matrix> lat;
    run(params, panel, std::span(idx).subspan(start, len), nullptr, 1.0, nullptr, &lat, nullptr);
    for (std::size_t s = 0; s < lat.size(); ++s)
      for (std::size_t b = 0; b < len; ++b)
        for (std::size_t d = 0; d < dim; ++d)
          out.at(start + b, s + 1, d) =
              lat[s](static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(b));
  }
  const std::uint64_t ids[2] = {params.fingerprint(), panel.fingerprint()};
  out.source_fingerprint = fnv1a(ids, sizeof(ids));
  return out;
}

namespace detail {

BatchEvaluator::BatchEvaluator() : workspace_(std::make_unique<Workspace>()) {}
BatchEvaluator::~BatchEvaluator() = default;

double BatchEvaluator::operator()(const FactorParams& params, const TrajectoryPanel& panel,
                                  std::span<const std::size_t> individuals,
                                  FactorParams* gradient, double keep_probability,
                                  numkit::RngStream* dropout_rng, bool single_precision) {
  if (single_precision) {
    return run<float>(params, panel, individuals, gradient, keep_probability, dropout_rng,
                      nullptr, nullptr, workspace_->narrow);
  }
  return run<double>(params, panel, individuals, gradient, keep_probability, dropout_rng,
                     nullptr, nullptr, workspace_->wide);
}

double evaluate(const FactorParams& params, const TrajectoryPanel& panel,
                std::span<const std::size_t> individuals, FactorParams* gradient,
                double keep_probability, numkit::RngStream* dropout_rng) {
  return run(params, panel, individuals, gradient, keep_probability, dropout_rng, nullptr,
             nullptr);
}

}  // namespace detail

}  // namespace latentiv::factor
