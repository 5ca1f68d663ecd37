#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "convospat/error.hpp"
#include "convospat/latent_process.hpp"
#include "doctest.h"

using namespace convospat;

namespace {

SpatialFrame random_frame(std::size_t K, std::size_t m, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 5.0);
  std::vector<Location> sites;
  for (std::size_t k = 0; k < K; ++k) sites.push_back({"s" + std::to_string(k), u(rng), u(rng)});
  return SpatialFrame::build(sites, m);
}

Eigen::MatrixXd dense(const SparseWeights& w) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(Eigen::Index(w.size()), Eigen::Index(w.size()));
  for (const auto& t : w.triplets()) out(Eigen::Index(t.row), Eigen::Index(t.col)) = t.weight;
  return out;
}

}  // namespace

TEST_CASE("precision matrix entries") {
  const auto q0 = precision_matrix(0.0, 4);
  for (double d : q0.diag) CHECK(d == 1.0);
  for (double o : q0.off) CHECK(o == 0.0);

  const auto q = precision_matrix(0.5, 3);
  CHECK(q.diag == std::vector<double>{1.25, 1.25, 1.0});
  CHECK(q.off == std::vector<double>{-0.5, -0.5});
  CHECK_THROWS_AS(precision_matrix(1.0, 3), InputError);
  CHECK_THROWS_AS(precision_matrix(-0.1, 3), InputError);
}

TEST_CASE("inverse precision matches the recursion covariance") {
  const double gamma = 0.8;
  const std::size_t N = 4;
  const auto inv = precision_inverse(gamma, N);
  Rng rng(21);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(N, N);
  const int reps = 100000;
  for (int r = 0; r < reps; ++r) {
    Eigen::VectorXd th(N);
    th(0) = z(rng);
    for (std::size_t t = 1; t < N; ++t) th(Eigen::Index(t)) = gamma * th(Eigen::Index(t - 1)) + z(rng);
    cov += th * th.transpose();
  }
  cov /= reps;
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      CHECK(std::abs(inv[i * N + j] - cov(Eigen::Index(i), Eigen::Index(j))) < 0.02);
    }
  }
  // Dense inverse of the same tridiagonal.
  const auto q = precision_matrix(gamma, N);
  Eigen::MatrixXd qd = Eigen::MatrixXd::Zero(N, N);
  for (std::size_t t = 0; t < N; ++t) qd(Eigen::Index(t), Eigen::Index(t)) = q.diag[t];
  for (std::size_t t = 0; t + 1 < N; ++t) {
    qd(Eigen::Index(t), Eigen::Index(t + 1)) = qd(Eigen::Index(t + 1), Eigen::Index(t)) = q.off[t];
  }
  const Eigen::MatrixXd qi = qd.inverse();
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      CHECK(inv[i * N + j] == doctest::Approx(qi(Eigen::Index(i), Eigen::Index(j))).epsilon(1e-12));
    }
  }
}

TEST_CASE("prior draws") {
  Rng rng(22);
  SUBCASE("independent when gamma is zero") {
    const auto th = sample_theta_prior({0.0, 1.0}, 100000, 2, rng);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t k = 0; k < th.sites(); ++k) {
      sxy += th(k, 0) * th(k, 1);
      sxx += th(k, 0) * th(k, 0);
      syy += th(k, 1) * th(k, 1);
    }
    CHECK(std::abs(sxy / std::sqrt(sxx * syy)) < 0.01);
  }
  SUBCASE("lag one correlation") {
    const auto th = sample_theta_prior({0.9, 1.0}, 100000, 2, rng);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t k = 0; k < th.sites(); ++k) {
      sxy += th(k, 0) * th(k, 1);
      sxx += th(k, 0) * th(k, 0);
      syy += th(k, 1) * th(k, 1);
    }
    CHECK(std::abs(sxy / std::sqrt(sxx * syy) - 0.9 / std::sqrt(1.81)) < 0.01);
  }
}

TEST_CASE("convolution") {
  Rng rng(23);
  const auto frame = random_frame(6, 3, rng);
  const auto theta = sample_theta_prior({0.5, 1.0}, 6, 4, rng);

  AdaptiveWeightState self(6, 3);
  for (std::size_t k = 0; k < 6; ++k) {
    auto p = self.psi(k);
    std::fill(p.begin(), p.end(), 0.0);
    p[0] = 1.0;
  }
  CHECK(convolve(adaptive_weights(frame, self), theta) == theta);

  const auto w = global_kernel_weights(frame, 0.7);
  Field constant(6, 4);
  for (double& v : constant.values()) v = 2.5;
  const auto smooth = convolve(w, constant);
  for (double v : smooth.values()) CHECK(v == doctest::Approx(2.5).epsilon(1e-14));

  const auto phi = convolve(w, theta);
  const Eigen::MatrixXd wd = dense(w);
  for (std::size_t t = 0; t < 4; ++t) {
    Eigen::VectorXd col(6);
    for (std::size_t k = 0; k < 6; ++k) col(Eigen::Index(k)) = theta(k, t);
    const Eigen::VectorXd out = wd * col;
    for (std::size_t k = 0; k < 6; ++k) CHECK(phi(k, t) == doctest::Approx(out(Eigen::Index(k))).epsilon(1e-14));
  }
  CHECK_THROWS_AS(convolve(w, Field(5, 4)), InputError);
}

TEST_CASE("spatial correlation") {
  // Two well separated pairs: taper sets of the groups never meet.
  const auto frame = SpatialFrame::build({{"a", 0, 0}, {"b", 1, 0}, {"c", 100, 0}, {"d", 101, 0}}, 2);
  const auto w = global_kernel_weights(frame, 1.0);
  CHECK(spatial_correlation(w, 0, 2) == 0.0);
  CHECK(spatial_correlation(w, 1, 3) == 0.0);
  CHECK(spatial_correlation(w, 0, 0) == doctest::Approx(1.0));
  const double a = w.at(0, 0), b = w.at(0, 1);
  CHECK(spatial_correlation(w, 0, 1) == doctest::Approx(2 * a * b / (a * a + b * b)));

  const auto pairs = overlapping_pair_correlations(w);
  CHECK(pairs.size() == 6);
  for (const auto& p : pairs) CHECK(p.k <= p.i);
}

TEST_CASE("closed-form moments against a dense oracle") {
  Rng rng(24);
  const auto frame = random_frame(7, 3, rng);
  const auto w = global_kernel_weights(frame, 0.8);
  const Ar1Params params{0.6, 1.7};
  const std::size_t N = 3;
  const auto mom = phi_moments(w, params, N);
  const Eigen::MatrixXd wd = dense(w);
  const Eigen::MatrixXd wwt = wd * wd.transpose();
  const auto inv = precision_inverse(params.gamma, N);
  for (std::size_t k = 0; k < 7; ++k) {
    for (std::size_t t = 0; t < N; ++t) {
      CHECK(mom.variance(k, t) ==
            doctest::Approx(params.tau2 * inv[t * N + t] * wwt(Eigen::Index(k), Eigen::Index(k))).epsilon(1e-12));
    }
  }
  for (std::size_t t = 0; t < N; ++t) {
    for (std::size_t r = 0; r < N; ++r) {
      CHECK(mom.temporal(t, r) == doctest::Approx(inv[t * N + r] / std::sqrt(inv[t * N + t] * inv[r * N + r])));
    }
  }
  for (const auto& p : mom.spatial) {
    const double c = wwt(Eigen::Index(p.k), Eigen::Index(p.i)) /
                     std::sqrt(wwt(Eigen::Index(p.k), Eigen::Index(p.k)) * wwt(Eigen::Index(p.i), Eigen::Index(p.i)));
    CHECK(p.corr == doctest::Approx(c).epsilon(1e-12));
  }
}

TEST_CASE("bandwidth calibration") {
  Rng rng(25);
  const auto frame = random_frame(80, 8, rng);
  const double alpha = calibrate_bandwidth(frame, 0.5);
  CHECK(median_taper_correlation(global_kernel_weights(frame, alpha)) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK_THROWS_AS(calibrate_bandwidth(frame, 0.999), InputError);
}

TEST_CASE("tridiagonal solve") {
  const auto q = precision_matrix(0.3, 5);
  const TridiagonalCholesky chol(q);
  const std::vector<double> b{1, -2, 0.5, 3, 0};
  const auto x = chol.solve(b);
  for (std::size_t t = 0; t < 5; ++t) {
    double r = q.diag[t] * x[t];
    if (t > 0) r += q.off[t - 1] * x[t - 1];
    if (t + 1 < 5) r += q.off[t] * x[t + 1];
    CHECK(r == doctest::Approx(b[t]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(TridiagonalCholesky(Tridiagonal{{1.0, -1.0}, {0.0}}), NumericalError);
}
