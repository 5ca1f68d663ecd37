#include <cmath>
#include <random>

#include "convospat/error.hpp"
#include "convospat/model_core.hpp"
#include "doctest.h"

using namespace convospat;

namespace {

ObservationPanel make_panel(std::size_t K, std::size_t N, std::size_t p, Rng& rng) {
  ObservationPanel panel;
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> e(5.0, 30.0);
  std::poisson_distribution<int> y(12);
  for (std::size_t k = 0; k < K; ++k) panel.site_ids.push_back("s" + std::to_string(k));
  panel.covariate_names.push_back("intercept");
  for (std::size_t i = 1; i < p; ++i) panel.covariate_names.push_back("x" + std::to_string(i));
  panel.covariate_sds.assign(p, 1.0);
  panel.standardised.assign(p, false);
  panel.y = Field(K, N);
  panel.e = Field(K, N);
  panel.x.assign(K * N * p, 1.0);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t t = 0; t < N; ++t) {
      panel.y(k, t) = y(rng);
      panel.e(k, t) = e(rng);
      for (std::size_t i = 1; i < p; ++i) panel.x[(k * N + t) * p + i] = z(rng);
    }
  }
  return panel;
}

double naive_pmf_log(double y, double mu) {
  double log_fact = 0.0;
  for (int i = 2; i <= int(y); ++i) log_fact += std::log(double(i));
  return y * std::log(mu) - mu - log_fact;
}

}  // namespace

TEST_CASE("log rate") {
  Rng rng(31);
  auto panel = make_panel(3, 2, 1, rng);
  const Field zero(3, 2);
  const auto null_rate = log_rate(panel, std::vector<double>{0.0}, zero);
  for (double v : null_rate.values()) CHECK(v == 0.0);

  Field phi(3, 2);
  std::normal_distribution<double> z(0.0, 1.0);
  for (double& v : phi.values()) v = z(rng);
  const auto lr = log_rate(panel, std::vector<double>{0.4}, phi);
  for (std::size_t c = 0; c < 6; ++c) CHECK(lr.values()[c] == doctest::Approx(0.4 + phi.values()[c]));

  ObservationPanel one = make_panel(1, 1, 2, rng);
  one.x = {1.0, 2.0};
  Field f(1, 1);
  f(0, 0) = -0.2;
  CHECK(log_rate(one, std::vector<double>{0.1, 0.3}, f)(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("Poisson cell terms") {
  CHECK(poisson_cell_loglik(0, 1, 0) == doctest::Approx(-1.0));
  CHECK(poisson_cell_loglik(2, 1, 0) == doctest::Approx(-1 - std::log(2.0)));
  CHECK(poisson_cell_loglik(2, 1, 0) == doctest::Approx(-1.6931).epsilon(1e-4));

  Rng rng(32);
  const auto panel = make_panel(5, 4, 2, rng);
  Field lr(5, 4);
  std::normal_distribution<double> z(0.0, 0.5);
  for (double& v : lr.values()) v = z(rng);
  double naive = 0.0;
  const auto cells = pointwise_loglik(panel, lr);
  for (std::size_t k = 0; k < 5; ++k) {
    for (std::size_t t = 0; t < 4; ++t) {
      const double c = naive_pmf_log(panel.y(k, t), panel.e(k, t) * std::exp(lr(k, t)));
      CHECK(cells(k, t) == doctest::Approx(c).epsilon(1e-10));
      naive += c;
    }
  }
  CHECK(poisson_loglik(panel, lr) == doctest::Approx(naive).epsilon(1e-10));

  const auto single = make_panel(1, 1, 1, rng);
  Field l1(1, 1);
  CHECK(poisson_loglik(single, l1) == pointwise_loglik(single, l1)(0, 0));
}

TEST_CASE("panel validation") {
  Rng rng(33);
  auto panel = make_panel(2, 2, 2, rng);
  CHECK_NOTHROW(panel.validate());
  auto bad = panel;
  bad.y(0, 1) = 1.5;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = panel;
  bad.e(1, 0) = 0.0;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = panel;
  bad.x[0] = 2.0;
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("covariate standardisation") {
  Rng rng(34);
  auto panel = make_panel(10, 3, 3, rng);
  for (std::size_t c = 0; c < 30; ++c) {
    panel.x[c * 3 + 1] = 5.0 + 3.0 * panel.x[c * 3 + 1];
    panel.x[c * 3 + 2] = double(c % 2);
  }
  standardise_covariates(panel);
  CHECK(panel.standardised[1]);
  CHECK_FALSE(panel.standardised[2]);
  CHECK(panel.covariate_sds[2] == 1.0);
  double mean = 0.0;
  for (std::size_t c = 0; c < 30; ++c) mean += panel.x[c * 3 + 1] / 30.0;
  double ss = 0.0;
  for (std::size_t c = 0; c < 30; ++c) ss += std::pow(panel.x[c * 3 + 1] - mean, 2);
  CHECK(std::sqrt(ss / 29.0) == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t c = 0; c < 30; ++c) CHECK(panel.x[c * 3 + 2] == double(c % 2));

  const auto again = panel.x;
  standardise_covariates(panel);
  CHECK(panel.x == again);
}

TEST_CASE("AR(1) prior density") {
  Field th(1, 3);
  th(0, 0) = 0.3;
  th(0, 1) = -0.1;
  th(0, 2) = 0.4;
  const double g = 0.6, s2 = 0.5;
  auto lnorm = [&](double x) { return -0.5 * std::log(2 * M_PI * s2) - 0.5 * x * x / s2; };
  const double expected = lnorm(0.3) + lnorm(-0.1 - g * 0.3) + lnorm(0.4 - g * -0.1);
  CHECK(ar1_log_prior(th, g, s2) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("conditional density differences match the joint") {
  Rng rng(35);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  std::vector<Location> sites;
  for (int k = 0; k < 5; ++k) sites.push_back({"s" + std::to_string(k), u(rng), u(rng)});
  const auto frame = SpatialFrame::build(sites, 3);
  const auto panel = make_panel(5, 3, 2, rng);
  std::normal_distribution<double> z(0.0, 0.4);
  std::uniform_int_distribution<std::size_t> pick_k(0, 4), pick_t(0, 2);
  for (int rep = 0; rep < 200; ++rep) {
    LatentState s;
    s.beta = {z(rng), z(rng)};
    s.theta = Field(5, 3);
    for (double& v : s.theta.values()) v = z(rng);
    s.gamma = 0.9 * u(rng) / 3.0;
    s.tau2 = 0.05 + u(rng);
    s.weights = global_kernel_weights(frame, 0.2 + u(rng));
    const Field phi = convolve(s.weights, s.theta);
    const std::size_t j = pick_k(rng), t = pick_t(rng);
    const double star = s.theta(j, t) + z(rng);
    auto joint = [&](const Field& th) {
      return poisson_loglik(panel, log_rate(panel, s.beta, convolve(s.weights, th))) +
             ar1_log_prior(th, s.gamma, s.tau2);
    };
    Field moved = s.theta;
    moved(j, t) = star;
    const double dj = joint(moved) - joint(s.theta);
    const double dc = theta_conditional_logdensity(panel, frame, s, phi, j, t, star) -
                      theta_conditional_logdensity(panel, frame, s, phi, j, t, s.theta(j, t));
    CHECK(std::abs(dj - dc) < 1e-8);
  }
}

TEST_CASE("identity weights involve only the own site") {
  Rng rng(36);
  std::vector<Location> sites;
  for (int k = 0; k < 4; ++k) sites.push_back({"s" + std::to_string(k), double(k), 0.0});
  const auto frame = SpatialFrame::build(sites, 2);
  AdaptiveWeightState psi(4, 2);
  for (std::size_t k = 0; k < 4; ++k) {
    psi.psi(k)[0] = 1.0;
    psi.psi(k)[1] = 0.0;
  }
  LatentState s;
  s.beta = {0.1};
  s.theta = Field(4, 1);
  s.gamma = 0.0;
  s.tau2 = 0.7;
  s.weights = adaptive_weights(frame, psi);
  const auto panel = make_panel(4, 1, 1, rng);
  const Field phi = convolve(s.weights, s.theta);
  const double star = 0.35;
  const double got = theta_conditional_logdensity(panel, frame, s, phi, 2, 0, star) -
                     theta_conditional_logdensity(panel, frame, s, phi, 2, 0, 0.0);
  const double expected = poisson_cell_loglik(panel.y(2, 0), panel.e(2, 0), 0.1 + star) -
                          poisson_cell_loglik(panel.y(2, 0), panel.e(2, 0), 0.1) - 0.5 * star * star / 0.7;
  CHECK(got == doctest::Approx(expected).epsilon(1e-12));
}
