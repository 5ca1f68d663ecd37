#include <cmath>
#include <cstdint>
#include <set>

#include "convospat/error.hpp"
#include "convospat/standardization.hpp"
#include "doctest.h"

using namespace convospat;

TEST_CASE("expected counts") {
  ListSizeTable one{{"a"}, {"g"}, {100.0}, {0.1}};
  CHECK(expected_counts(one).expected[0] == doctest::Approx(10.0));

  ListSizeTable two{{"a"}, {"g1", "g2"}, {100.0, 50.0}, {0.1, 0.2}};
  CHECK(expected_counts(two).expected[0] == doctest::Approx(20.0));

  ListSizeTable zero{{"a", "b"}, {"g1", "g2"}, {100.0, 50.0, 10.0, 10.0}, {0.0, 0.0}};
  const auto e = expected_counts(zero);
  CHECK(e.excluded[0]);
  CHECK(e.excluded[1]);
  CHECK_FALSE(e.warnings.empty());

  ListSizeTable negative{{"a"}, {"g"}, {-1.0}, {0.1}};
  CHECK_THROWS_AS(expected_counts(negative), InputError);
}

TEST_CASE("default groups") {
  const auto g = default_age_sex_groups();
  CHECK(g.size() == 16);
  CHECK(std::set<std::string>(g.begin(), g.end()).size() == 16);
}

TEST_CASE("scaling expected counts") {
  Field e(2, 2), y(2, 2);
  for (double& v : e.values()) v = 1.0;
  for (double& v : y.values()) v = 2.0;
  const auto scaled = scale_expected(e, y);
  for (double v : scaled.values()) CHECK(v == doctest::Approx(2.0));

  Field e2(1, 3), y2(1, 3);
  e2.values() = {1.0, 2.0, 3.0};
  y2.values() = {3.0, 1.0, 2.0};
  CHECK(scale_expected(e2, y2) == e2);
  CHECK_THROWS_AS(scale_expected(e2, Field(1, 3)), InputError);
}

TEST_CASE("standardised rates") {
  Field y(1, 3), e(1, 3);
  y.values() = {10.0, 0.0, 12.0};
  e.values() = {10.0, 4.0, 10.0};
  const auto r = spr(y, e);
  CHECK(r(0, 0) == 1.0);
  CHECK(r(0, 1) == 0.0);
  CHECK(r(0, 2) == doctest::Approx(1.2));
}

TEST_CASE("null generator has unit rates on average") {
  SimulationConfig cfg;
  cfg.K = 100;
  cfg.beta = {0.0};
  cfg.zero_theta = true;
  cfg.seed = 61;
  const auto d = simulate_dataset(cfg);
  double sum = 0.0;
  for (double v : spr(d.panel.y, d.panel.e).values()) sum += v;
  CHECK(std::abs(sum / 1000.0 - 1.0) < 0.02);
}

TEST_CASE("Poisson dispersion of the null generator") {
  SimulationConfig cfg;
  cfg.K = 100;
  cfg.beta = {0.0};
  cfg.zero_theta = true;
  cfg.time_varying_e = true;
  cfg.seed = 62;
  const auto d = simulate_dataset(cfg);
  double chi2 = 0.0;
  for (std::size_t c = 0; c < 1000; ++c) {
    const double mu = d.panel.e.values()[c];
    chi2 += std::pow(d.panel.y.values()[c] - mu, 2) / mu;
  }
  // 1% two-sided bounds of chi-square(1000), normal approximation.
  const double half = 2.5758 * std::sqrt(2000.0);
  CHECK(chi2 > 1000.0 - half);
  CHECK(chi2 < 1000.0 + half);
}

TEST_CASE("boundary scenario separates the clusters") {
  // One dataset gives a noisy across-cluster correlation (many western sites
  // share the same nearest eastern site), so the check averages 20 datasets.
  constexpr int kDatasets = 20;
  double within_sum = 0.0;
  double across_sum = 0.0;
  for (int rep = 0; rep < kDatasets; ++rep) {
    SimulationConfig cfg;
    cfg.scheme = TruthScheme::boundary;
    cfg.boundary_gap = 2.0;
    cfg.alpha = 0.3;
    cfg.tau2 = 0.5;
    cfg.beta = {0.0};
    cfg.seed = std::uint64_t(63 + rep);
    const auto d = simulate_dataset(cfg);
    for (std::size_t k = 0; k < cfg.K; ++k) {
      for (const auto& t : d.truth.weights.row(k)) {
        if (d.truth.cluster[t.col] != d.truth.cluster[k]) CHECK(t.weight == 0.0);
      }
    }
    auto logspr = [&](std::size_t k, std::size_t t) { return std::log((d.panel.y(k, t) + 0.5) / d.panel.e(k, t)); };
    auto corr = [&](const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
      std::vector<std::pair<double, double>> xy;
      for (const auto& [k, j] : pairs) {
        for (std::size_t s = 0; s < cfg.N; ++s) xy.emplace_back(logspr(k, s), logspr(j, s));
      }
      double mx = 0, my = 0;
      for (const auto& [x, y] : xy) {
        mx += x / double(xy.size());
        my += y / double(xy.size());
      }
      double sxy = 0, sxx = 0, syy = 0;
      for (const auto& [x, y] : xy) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
      }
      return sxy / std::sqrt(sxx * syy);
    };
    std::vector<std::pair<std::size_t, std::size_t>> within, across;
    for (std::size_t k = 0; k < cfg.K; ++k) {
      const std::size_t nearest = d.frame.taper_set(k)[1];
      if (d.truth.cluster[nearest] == d.truth.cluster[k]) within.emplace_back(k, nearest);
      if (d.truth.cluster[k] == 0) {
        std::size_t best = cfg.K;
        double bd = 1e300;
        for (std::size_t j = 0; j < cfg.K; ++j) {
          if (d.truth.cluster[j] == 1 && d.frame.distance(k, j) < bd) {
            bd = d.frame.distance(k, j);
            best = j;
          }
        }
        across.emplace_back(k, best);
      }
    }
    within_sum += corr(within);
    across_sum += corr(across);
  }
  MESSAGE("within " << within_sum / kDatasets << " across " << across_sum / kDatasets);
  CHECK(within_sum / kDatasets > 0.2);
  CHECK(std::abs(across_sum / kDatasets) < 0.1);
}

TEST_CASE("simulation is a pure function of the config") {
  SimulationConfig cfg;
  cfg.K = 30;
  cfg.seed = 64;
  const auto a = simulate_dataset(cfg);
  const auto b = simulate_dataset(cfg);
  CHECK(a.panel.y == b.panel.y);
  CHECK(a.panel.x == b.panel.x);
  CHECK(a.truth.phi == b.truth.phi);
  cfg.seed = 65;
  CHECK_FALSE(simulate_dataset(cfg).panel.y == a.panel.y);
}

TEST_CASE("single-site dataset") {
  SimulationConfig cfg;
  cfg.K = 1;
  cfg.N = 3;
  const auto d = simulate_dataset(cfg);
  CHECK(d.frame.width() == 1);
  CHECK(d.frame.taper_set(0)[0] == 0);
  CHECK_NOTHROW(d.panel.validate());
}

TEST_CASE("calibrated bandwidth is recorded") {
  SimulationConfig cfg;
  cfg.target_taper_corr = 0.5;
  cfg.seed = 66;
  const auto d = simulate_dataset(cfg);
  CHECK(d.truth.config.alpha != cfg.alpha);
  CHECK(d.truth.weights.triplets() == global_kernel_weights(d.frame, d.truth.config.alpha).triplets());
}
