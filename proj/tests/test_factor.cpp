#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fd_check.hpp"
#include "helpers.hpp"
#include "latentiv/error.hpp"
#include "latentiv/factor.hpp"

using namespace latentiv;
using testing::random_panel;
using testing::random_params;

namespace {

factor::ModelShape tiny_shape(bool fc = true, bool w_input = false) {
  return factor::ModelShape{2, 5, fc ? 4u : 0u, 1, w_input};
}

factor::TrainConfig quick_train(std::size_t epochs = 3) {
  factor::TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 32;
  c.hidden_units = 8;
  c.fc_units = 8;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_SUITE("factor") {

TEST_CASE("likelihood matches the loop-based evaluator") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    for (bool fc : {true, false}) {
      for (bool w : {false, true}) {
        const auto panel = random_panel(4, 3, 2, seed);
        const auto params = random_params(tiny_shape(fc, w), seed + 100);
        const double lib = factor::negative_log_likelihood(params, panel);
        CHECK(lib == doctest::Approx(testing::naive_nll(params, panel)).epsilon(1e-12));
        CHECK(std::abs(lib - testing::naive_nll(params, panel)) <= 1e-10);
      }
    }
  }
}

TEST_CASE("likelihood is the sum of per-covariate Gaussian terms") {
  const auto panel = random_panel(6, 5, 3, 3);
  const auto params = random_params(factor::ModelShape{3, 6, 4, 2, false}, 9);
  const auto terms = testing::naive_nll_terms(params, panel);
  double sum = 0.0;
  for (double v : terms) sum += v;
  CHECK(std::abs(factor::negative_log_likelihood(params, panel) - sum) <= 1e-10);
}

TEST_CASE("zero residual with unit scale costs half log two pi per term") {
  // Constant covariates equal to the emission bias; emission weights zero.
  TrajectoryPanel panel(3, 4, 2);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t t = 1; t <= 4; ++t) {
      panel.covariate(i, t, 0) = 0.7;
      panel.covariate(i, t, 1) = -1.2;
    }
  auto params = random_params(tiny_shape(), 4);
  params.standardizer = factor::Standardizer::identity(2);
  params.emission_weights.setZero();
  params.emission_bias << 0.7, -1.2;
  params.log_sigma.setZero();
  const double per_term = 0.5 * std::log(2.0 * M_PI);
  CHECK(factor::negative_log_likelihood(params, panel) == doctest::Approx(4 * 2 * per_term).epsilon(1e-14));

  const auto g = factor::gradients(params, panel).gradient;
  CHECK(g.emission_bias.cwiseAbs().maxCoeff() == 0.0);

  // Doubling every sigma with zero residuals adds log 2 per term.
  params.log_sigma.array() += std::log(2.0);
  CHECK(factor::negative_log_likelihood(params, panel) ==
        doctest::Approx(4 * 2 * (per_term + std::log(2.0))).epsilon(1e-14));
}

TEST_CASE("analytic gradients match central differences") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (bool fc : {true, false}) {
      const auto panel = random_panel(3, 4, 2, seed);
      const auto params = random_params(tiny_shape(fc, seed == 2), seed * 31);
      const auto r = testing::finite_difference_check(params, panel);
      INFO("worst coordinate " << r.worst);
      CHECK(r.max_relative_error <= 1e-4);
    }
  }
}

TEST_CASE("gradient is unchanged when every individual is duplicated") {
  const auto panel = random_panel(3, 4, 2, 8);
  const auto twice = panel.select({0, 1, 2, 0, 1, 2});
  const auto params = random_params(tiny_shape(), 12);
  const auto a = factor::gradients(params, panel);
  const auto b = factor::gradients(params, twice);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-14));
  std::vector<double> va, vb;
  a.gradient.for_each_tensor([&](const std::string&, std::span<const double> v) { va.insert(va.end(), v.begin(), v.end()); });
  b.gradient.for_each_tensor([&](const std::string&, std::span<const double> v) { vb.insert(vb.end(), v.begin(), v.end()); });
  REQUIRE(va.size() == vb.size());
  for (std::size_t q = 0; q < va.size(); ++q) CHECK(va[q] == doctest::Approx(vb[q]).epsilon(1e-12));
}

TEST_CASE("single-precision batches track the double path") {
  const auto panel = random_panel(40, 6, 3, 2);
  auto params = random_params(factor::ModelShape{3, 16, 16, 1, false}, 5, 0.2);
  std::vector<std::size_t> idx(40);
  std::iota(idx.begin(), idx.end(), 0);
  factor::detail::BatchEvaluator eval;
  factor::FactorParams gd, gf;
  const double ld = eval(params, panel, idx, &gd, 1.0, nullptr, false);
  const double lf = eval(params, panel, idx, &gf, 1.0, nullptr, true);
  CHECK(lf == doctest::Approx(ld).epsilon(1e-5));
  double num = 0.0, den = 0.0;
  std::vector<double> a, b;
  gd.for_each_tensor([&](const std::string&, std::span<const double> v) { a.insert(a.end(), v.begin(), v.end()); });
  gf.for_each_tensor([&](const std::string&, std::span<const double> v) { b.insert(b.end(), v.begin(), v.end()); });
  for (std::size_t q = 0; q < a.size(); ++q) {
    num += (a[q] - b[q]) * (a[q] - b[q]);
    den += a[q] * a[q];
  }
  CHECK(std::sqrt(num / den) < 1e-4);
  // The double evaluator agrees with the public gradient exactly.
  const auto pub = factor::gradients(params, panel);
  CHECK(pub.loss == doctest::Approx(ld).epsilon(1e-13));
}

TEST_CASE("zero parameters give one constant latent") {
  const auto panel = random_panel(3, 5, 2, 1);
  auto params = factor::FactorParams::zeros(tiny_shape());
  params.standardizer = factor::Standardizer::identity(2);
  const auto lat = factor::infer_latents(params, panel);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t t = 1; t <= 5; ++t) CHECK(lat.at(i, t, 0) == lat.at(0, 1, 0));
}

TEST_CASE("forward is deterministic and a function of the covariate history") {
  auto panel = random_panel(3, 5, 2, 4);
  for (std::size_t t = 1; t <= 5; ++t)
    for (std::size_t j = 0; j < 2; ++j) panel.covariate(1, t, j) = panel.covariate(0, t, j);
  const auto params = random_params(tiny_shape(), 3);
  const auto a = factor::forward(params, panel, 0);
  const auto b = factor::forward(params, panel, 0);
  CHECK(a.latents == b.latents);
  CHECK(a.predicted_means == b.predicted_means);
  CHECK(factor::forward(params, panel, 1).latents == a.latents);
  CHECK(a.latents.rows() == 5);
  CHECK(a.predicted_means.cols() == 2);
}

TEST_CASE("latent at t ignores covariates from t onwards") {
  const auto base = random_panel(4, 6, 2, 10);
  const auto params = random_params(tiny_shape(), 2);
  const auto reference = factor::infer_latents(params, base);
  for (std::size_t t = 1; t <= 6; ++t) {
    auto mutated = base;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t s = t; s <= 6; ++s)
        for (std::size_t j = 0; j < 2; ++j) mutated.covariate(i, s, j) += 3.0 + static_cast<double>(s);
    const auto lat = factor::infer_latents(params, mutated);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t s = 1; s <= t; ++s) CHECK(lat.at(i, s, 0) == reference.at(i, s, 0));
    if (t < 6) {
      bool changed = false;
      for (std::size_t i = 0; i < 4; ++i) changed = changed || lat.at(i, t + 1, 0) != reference.at(i, t + 1, 0);
      CHECK(changed);
    }
  }
}

TEST_CASE("treatment input switch feeds the previous treatment") {
  auto panel = random_panel(3, 4, 2, 6);
  const auto with_w = random_params(tiny_shape(true, true), 8);
  const auto without = random_params(tiny_shape(true, false), 8);
  auto flipped = panel;
  for (std::size_t t = 1; t <= 4; ++t) flipped.treatment(0, t) = 1.0 - flipped.treatment(0, t);
  const auto a = factor::infer_latents(without, panel), b = factor::infer_latents(without, flipped);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t t = 1; t <= 4; ++t) CHECK(a.at(i, t, 0) == b.at(i, t, 0));
  CHECK(!(factor::infer_latents(with_w, panel).at(0, 2, 0) == factor::infer_latents(with_w, flipped).at(0, 2, 0)));
}

TEST_CASE("permuting individuals permutes latent rows") {
  const auto panel = random_panel(5, 4, 2, 12);
  const auto params = random_params(tiny_shape(), 13);
  const std::vector<std::size_t> order{3, 0, 4, 1, 2};
  const auto a = factor::infer_latents(params, panel);
  const auto b = factor::infer_latents(params, panel.select(order));
  for (std::size_t q = 0; q < order.size(); ++q)
    for (std::size_t t = 1; t <= 4; ++t) CHECK(std::abs(b.at(q, t, 0) - a.at(order[q], t, 0)) <= 1e-12);
}

TEST_CASE("dimension mismatch is reported") {
  const auto panel = random_panel(3, 4, 3, 1);
  const auto params = random_params(tiny_shape(), 1);
  CHECK_THROWS_AS(factor::forward(params, panel, 0), Error);
  try {
    factor::infer_latents(params, panel);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("non-finite parameters surface as NonFiniteLoss") {
  const auto panel = random_panel(3, 4, 2, 1);
  auto params = random_params(tiny_shape(), 1);
  params.emission_bias(0) = std::numeric_limits<double>::infinity();
  try {
    factor::negative_log_likelihood(params, panel);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteLoss);
  }
}

TEST_CASE("checkpoint round-trips bit for bit") {
  const auto panel = random_panel(20, 4, 2, 3);
  auto result = factor::train(panel, quick_train(2));
  const auto text = factor::to_checkpoint_json(result.params);
  const auto back = factor::from_checkpoint_json(text);
  CHECK(back.fingerprint() == result.params.fingerprint());
  CHECK(back.standardizer == result.params.standardizer);
  CHECK(back.shape == result.params.shape);
  CHECK(back.train_config.seed == result.params.train_config.seed);
  CHECK(factor::to_checkpoint_json(back) == text);
  CHECK(factor::infer_latents(back, panel) == factor::infer_latents(result.params, panel));
}

TEST_CASE("malformed checkpoints are rejected") {
  CHECK_THROWS_AS(factor::from_checkpoint_json("{"), Error);
  CHECK_THROWS_AS(factor::from_checkpoint_json(R"({"format":"other","version":1})"), Error);
}

TEST_CASE("training is deterministic per seed and reduces the loss") {
  datagen::SimConfig sim = testing::small_sim(300, 6);
  const auto panel = datagen::simulate_panel(sim, 0).observed;
  const auto a = factor::train(panel, quick_train(4));
  const auto b = factor::train(panel, quick_train(4));
  CHECK(a.params.fingerprint() == b.params.fingerprint());
  CHECK(a.epoch_losses == b.epoch_losses);
  CHECK(a.final_loss < a.initial_loss);
  CHECK(a.epoch_losses.size() == 4);
  auto other = quick_train(4);
  other.seed = 6;
  CHECK(factor::train(panel, other).params.fingerprint() != a.params.fingerprint());
}

TEST_CASE("batches larger than the panel are clipped") {
  const auto panel = random_panel(10, 3, 2, 2);
  auto c = quick_train(2);
  c.batch_size = 128;
  CHECK_NOTHROW(factor::train(panel, c));
}

TEST_CASE("invalid training configs are rejected") {
  auto c = quick_train();
  c.keep_probability = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = quick_train();
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = quick_train();
  c.latent_dim = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("trained latent tracks a strong common driver of the covariates") {
  // X_tj = a_j S_t + tiny noise with S an AR(1); L_t sees X up to t-1, so the
  // best it can do is the one-step prediction of S_t.
  const std::size_t n = 500, T = 6, k = 3;
  numkit::RngStream rng(21, 0);
  TrajectoryPanel panel(n, T, k);
  std::vector<double> s(n * T);
  const double load[k] = {1.0, -0.6, 0.8};
  for (std::size_t i = 0; i < n; ++i) {
    double prev = rng.normal(0.0, 1.0);
    for (std::size_t t = 1; t <= T; ++t) {
      const double cur = t == 1 ? prev : 0.9 * prev + rng.normal(0.0, 0.3);
      s[i * T + t - 1] = cur;
      for (std::size_t j = 0; j < k; ++j) panel.covariate(i, t, j) = load[j] * cur + rng.normal(0.0, 0.001);
      prev = cur;
    }
  }
  auto c = quick_train(30);
  c.hidden_units = 16;
  c.fc_units = 16;
  c.batch_size = 64;
  const auto result = factor::train(panel, c);
  const auto lat = factor::infer_latents(result.params, panel);
  double best = 0.0;
  for (std::size_t t = 2; t <= T; ++t) {
    double ml = 0, ms = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ml += lat.at(i, t, 0);
      ms += s[i * T + t - 1];
    }
    ml /= n;
    ms /= n;
    double sll = 0, sss = 0, sls = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = lat.at(i, t, 0) - ml, b = s[i * T + t - 1] - ms;
      sll += a * a;
      sss += b * b;
      sls += a * b;
    }
    CHECK(sll > 0.0);  // the latent varies across individuals once X enters
    best = std::max(best, std::abs(sls) / std::sqrt(sll * sss));
  }
  INFO("best |r| = " << best);
  CHECK(best >= 0.5);
}

}  // TEST_SUITE
