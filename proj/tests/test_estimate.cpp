#include <doctest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "latentiv/datagen.hpp"
#include "latentiv/error.hpp"
#include "latentiv/estimate.hpp"

using namespace latentiv;
using estimate::EstimatorId;

namespace {

LatentPanel treatment_as_latent(const TrajectoryPanel& panel, double scale = 1.0) {
  LatentPanel l(panel.n(), panel.t_steps(), 1);
  for (std::size_t i = 0; i < panel.n(); ++i)
    for (std::size_t t = 1; t <= panel.t_steps(); ++t) l.at(i, t, 0) = scale * panel.treatment(i, t);
  return l;
}

LatentPanel scaled(const LatentPanel& in, double scale) {
  LatentPanel out(in.n(), in.t_steps(), in.dim());
  for (std::size_t i = 0; i < in.n(); ++i)
    for (std::size_t t = 1; t <= in.t_steps(); ++t)
      for (std::size_t d = 0; d < in.dim(); ++d) out.at(i, t, d) = scale * in.at(i, t, d);
  return out;
}

LatentPanel permuted(const LatentPanel& in, const std::vector<std::size_t>& order) {
  LatentPanel out(order.size(), in.t_steps(), in.dim());
  for (std::size_t q = 0; q < order.size(); ++q)
    for (std::size_t t = 1; t <= in.t_steps(); ++t)
      for (std::size_t d = 0; d < in.dim(); ++d) out.at(q, t, d) = in.at(order[q], t, d);
  return out;
}

datagen::SyntheticPanel unconfounded(std::size_t n = 1000) {
  auto c = testing::small_sim(n, 6);
  c.disable_confounders = true;
  return datagen::simulate_panel(c, 0);
}

}  // namespace

TEST_SUITE("estimate") {

TEST_CASE("estimator names round-trip") {
  for (auto id : {EstimatorId::tsls, EstimatorId::naive, EstimatorId::adjusted_ols,
                  EstimatorId::linear_dml, EstimatorId::oracle_tsls}) {
    CHECK(estimate::estimator_from_string(estimate::to_string(id)) == id);
  }
  CHECK_THROWS_AS(estimate::estimator_from_string("forest"), Error);
  CHECK(estimate::needs_latents(EstimatorId::tsls));
  CHECK_FALSE(estimate::needs_latents(EstimatorId::naive));
}

TEST_CASE("TSLS is invariant to rescaling the instrument") {
  const auto sp = datagen::simulate_panel(testing::small_sim(800, 6), 2);
  const auto oracle = sp.oracle_latents();
  for (double scale : {-3.0, 0.01, 250.0}) {
    const auto other = scaled(oracle, scale);
    for (std::size_t t = 2; t <= 6; ++t) {
      const auto a = estimate::tsls_step(sp.observed, oracle, t);
      const auto b = estimate::tsls_step(sp.observed, other, t);
      CHECK(std::abs(a.beta_hat - b.beta_hat) <= 1e-8);
      CHECK(std::abs(a.std_error - b.std_error) <= 1e-8);
      CHECK(*a.first_stage_stat == doctest::Approx(*b.first_stage_stat).epsilon(1e-8));
    }
  }
}

TEST_CASE("TSLS with W as its own instrument is adjusted OLS") {
  const auto sp = datagen::simulate_panel(testing::small_sim(500, 6), 1);
  const auto w = treatment_as_latent(sp.observed);
  for (std::size_t t = 1; t <= 6; ++t) {
    const auto iv = estimate::tsls_step(sp.observed, w, t);
    const auto ols = estimate::adjusted_ols_step(sp.observed, t);
    CHECK(std::abs(iv.beta_hat - ols.beta_hat) <= 1e-8);
    CHECK(std::abs(iv.std_error - ols.std_error) <= 1e-8);
  }
}

TEST_CASE("unconfounded noiseless panels recover the effect exactly") {
  const auto sp = unconfounded();
  for (std::size_t t = 1; t <= 6; ++t) {
    CHECK(std::abs(estimate::adjusted_ols_step(sp.observed, t).beta_hat - 0.5) <= 1e-6);
    CHECK(std::abs(estimate::linear_dml_step(sp.observed, t, 5).beta_hat - 0.5) <= 1e-6);
    CHECK(std::abs(estimate::linear_dml_step(sp.observed, t, 2).beta_hat - 0.5) <= 1e-6);
  }
}

TEST_CASE("naive OLS is exact when neither U nor X vary") {
  auto sp = unconfounded(300);
  auto& p = sp.observed;
  for (std::size_t i = 0; i < p.n(); ++i)
    for (std::size_t t = 1; t <= p.t_steps(); ++t) {
      for (std::size_t j = 0; j < p.k(); ++j) p.covariate(i, t, j) = 0.0;
      p.outcome(i, t) = 0.5 * p.treatment(i, t);
    }
  for (std::size_t t = 1; t <= p.t_steps(); ++t) {
    CHECK(std::abs(estimate::naive_step(p, t).beta_hat - 0.5) <= 1e-10);
  }
}

TEST_CASE("adjusted OLS reduces to naive when X is identically zero") {
  TrajectoryPanel p = testing::random_panel(100, 3, 2, 4);
  for (std::size_t i = 0; i < 100; ++i)
    for (std::size_t t = 1; t <= 3; ++t)
      for (std::size_t j = 0; j < 2; ++j) p.covariate(i, t, j) = 0.0;
  estimate::EstimatorOptions opt;
  opt.allow_ridge = true;  // zero columns are rank deficient without the fallback
  for (std::size_t t = 1; t <= 3; ++t) {
    const auto naive = estimate::naive_step(p, t);
    try {
      estimate::adjusted_ols_step(p, t);
      FAIL("expected RankDeficient");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::RankDeficient);
    }
    const auto adj = estimate::adjusted_ols_step(p, t, opt);
    CHECK(adj.ridge_used);
    CHECK(std::abs(adj.beta_hat - naive.beta_hat) <= 1e-5);
  }
}

TEST_CASE("without confounding TSLS and adjusted OLS agree within two joint standard errors") {
  auto c = testing::small_sim(4000, 6);
  c.disable_confounders = true;
  c.outcome_noise_sd = 0.5;  // otherwise adjusted OLS is exact and the SE is zero
  const auto sp = datagen::simulate_panel(c, 3);
  const auto oracle = sp.oracle_latents();
  int agree = 0, total = 0;
  for (std::size_t t = 2; t <= 6; ++t) {
    const auto iv = estimate::tsls_step(sp.observed, oracle, t);
    const auto ols = estimate::adjusted_ols_step(sp.observed, t);
    const double joint = std::sqrt(iv.std_error * iv.std_error + ols.std_error * ols.std_error);
    agree += std::abs(iv.beta_hat - ols.beta_hat) <= 2.0 * joint ? 1 : 0;
    ++total;
  }
  CHECK(agree >= total - 1);
}

TEST_CASE("degenerate inputs") {
  auto p = testing::random_panel(20, 2, 2, 1);
  for (std::size_t i = 0; i < 20; ++i) p.treatment(i, 1) = 1.0;
  for (auto fn : {+[](const TrajectoryPanel& q) { return estimate::naive_step(q, 1); },
                  +[](const TrajectoryPanel& q) { return estimate::adjusted_ols_step(q, 1); },
                  +[](const TrajectoryPanel& q) { return estimate::linear_dml_step(q, 1, 2); }}) {
    try {
      fn(p);
      FAIL("expected DegenerateTreatment");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DegenerateTreatment);
    }
  }
  LatentPanel constant(20, 2, 1);
  try {
    estimate::tsls_step(p, constant, 2);
    FAIL("expected RankDeficient");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RankDeficient);
  }
  CHECK_THROWS_AS(estimate::naive_step(p, 3), Error);
  CHECK_THROWS_AS(estimate::linear_dml_step(p, 2, 1), Error);
  CHECK_THROWS_AS(estimate::linear_dml_step(testing::random_panel(5, 2, 2, 1), 2, 3), Error);
}

TEST_CASE("a single flipped treatment moves the naive estimate slightly") {
  auto p = testing::random_panel(200, 1, 1, 3);
  const double before = estimate::naive_step(p, 1).beta_hat;
  p.treatment(0, 1) = 1.0 - p.treatment(0, 1);
  const double after = estimate::naive_step(p, 1).beta_hat;
  CHECK(std::isfinite(after));
  CHECK(std::abs(after - before) < 0.1);
}

TEST_CASE("estimates are invariant to the order of individuals") {
  const auto sp = datagen::simulate_panel(testing::small_sim(300, 5), 4);
  std::vector<std::size_t> order(300);
  for (std::size_t q = 0; q < 300; ++q) order[q] = (q * 7 + 3) % 300;
  const auto shuffled = sp.observed.select(order);
  const auto lat = sp.oracle_latents();
  const auto lat_shuffled = permuted(lat, order);
  for (std::size_t t = 2; t <= 5; ++t) {
    CHECK(std::abs(estimate::naive_step(sp.observed, t).beta_hat - estimate::naive_step(shuffled, t).beta_hat) <= 1e-10);
    CHECK(std::abs(estimate::adjusted_ols_step(sp.observed, t).beta_hat -
                   estimate::adjusted_ols_step(shuffled, t).beta_hat) <= 1e-10);
    CHECK(std::abs(estimate::linear_dml_step(sp.observed, t, 5).beta_hat -
                   estimate::linear_dml_step(shuffled, t, 5).beta_hat) <= 1e-10);
    CHECK(std::abs(estimate::tsls_step(sp.observed, lat, t).beta_hat -
                   estimate::tsls_step(shuffled, lat_shuffled, t).beta_hat) <= 1e-10);
  }
}

TEST_CASE("folds are balanced and follow the individuals") {
  const auto sp = datagen::simulate_panel(testing::small_sim(103, 4), 0);
  const auto folds = estimate::fold_assignment(sp.observed, 5);
  std::vector<int> sizes(5, 0);
  for (auto f : folds) ++sizes[f];
  for (int s : sizes) CHECK((s == 20 || s == 21));
  std::vector<std::size_t> order(103);
  for (std::size_t q = 0; q < 103; ++q) order[q] = 102 - q;
  const auto moved = estimate::fold_assignment(sp.observed.select(order), 5);
  for (std::size_t q = 0; q < 103; ++q) CHECK(moved[q] == folds[order[q]]);
}

TEST_CASE("cross-fitting with 2 and 5 folds agree within two standard errors") {
  const auto sp = datagen::simulate_panel(testing::small_sim(4000, 6), 5);
  int agree = 0;
  for (std::size_t t = 2; t <= 6; ++t) {
    const auto a = estimate::linear_dml_step(sp.observed, t, 2);
    const auto b = estimate::linear_dml_step(sp.observed, t, 5);
    CHECK(a.folds == 2);
    CHECK(b.folds == 5);
    agree += std::abs(a.beta_hat - b.beta_hat) <= 2.0 * std::max(a.std_error, b.std_error) ? 1 : 0;
  }
  CHECK(agree >= 4);
}

TEST_CASE("first-stage diagnostics flag weak instruments") {
  const auto sp = datagen::simulate_panel(testing::small_sim(600, 5), 0);
  // Pure noise instrument.
  LatentPanel noise(600, 5, 1);
  numkit::RngStream rng(3, 3);
  for (std::size_t i = 0; i < 600; ++i)
    for (std::size_t t = 1; t <= 5; ++t) noise.at(i, t, 0) = rng.normal(0.0, 1.0);
  int weak = 0;
  for (std::size_t t = 1; t <= 5; ++t) {
    const auto e = estimate::tsls_step(sp.observed, noise, t);
    REQUIRE(e.first_stage_stat.has_value());
    weak += e.weak_instrument ? 1 : 0;
    CHECK(e.weak_instrument == (*e.first_stage_stat < 10.0));
  }
  CHECK(weak >= 4);
  const auto strong = estimate::tsls_step(sp.observed, treatment_as_latent(sp.observed), 3);
  CHECK_FALSE(strong.weak_instrument);
  CHECK(strong.std_error >= 0.0);
}

TEST_CASE("effect series cover every step and keep failures as gaps") {
  const auto sp = datagen::simulate_panel(testing::small_sim(300, 5), 0);
  LatentPanel lat = sp.oracle_latents();
  for (std::size_t i = 0; i < 300; ++i) lat.at(i, 3, 0) = 1.0;  // constant at t = 3
  const auto s = estimate::effect_series(sp.observed, &lat, EstimatorId::tsls);
  REQUIRE(s.steps.size() == 5);
  for (std::size_t t = 1; t <= 5; ++t) CHECK(s.steps[t - 1].t == t);
  CHECK_FALSE(s.steps[2].estimate.has_value());
  CHECK(*s.steps[2].error == ErrorCode::RankDeficient);
  CHECK(s.steps[1].estimate->beta_hat == estimate::tsls_step(sp.observed, lat, 2).beta_hat);
  CHECK(s.panel_fingerprint == sp.observed.fingerprint());

  const auto again = estimate::effect_series(sp.observed, &lat, EstimatorId::tsls);
  CHECK(estimate::series_csv(again) == estimate::series_csv(s));
  CHECK(estimate::series_json(again) == estimate::series_json(s));

  const auto csv = estimate::series_csv(s);
  CHECK(csv.rfind("t,estimator,beta_hat,std_error,first_stage_stat,error_code\n", 0) == 0);
  CHECK(csv.find("3,tsls,,,,RankDeficient\n") != std::string::npos);
  CHECK_THROWS_AS(estimate::effect_series(sp.observed, nullptr, EstimatorId::tsls), Error);
}

}  // TEST_SUITE
