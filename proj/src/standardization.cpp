#include "convospat/standardization.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

#include "convospat/error.hpp"
#include "convospat/latent_process.hpp"

namespace convospat {

void ListSizeTable::validate() const {
  if (counts.size() != site_ids.size() * groups.size()) {
    throw InputError("list-size table does not have one count per site and group");
  }
  if (rates.size() != groups.size()) throw InputError("list-size table needs one rate per group");
  for (double c : counts) {
    if (!(c >= 0.0) || !std::isfinite(c)) throw InputError("list sizes must be nonnegative");
  }
  for (double r : rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw InputError("group rates must lie in [0, 1]");
  }
}

std::vector<std::string> default_age_sex_groups() {
  static const char* bands[] = {"0-4", "5-14", "15-24", "25-44", "45-64", "65-74", "75-84", "85+"};
  std::vector<std::string> out;
  for (const char* sex : {"male", "female"}) {
    for (const char* band : bands) out.push_back(std::string(sex) + "_" + band);
  }
  return out;
}

ExpectedCounts expected_counts(const ListSizeTable& table) {
  table.validate();
  ExpectedCounts out;
  const std::size_t G = table.groups.size();
  for (std::size_t k = 0; k < table.site_ids.size(); ++k) {
    double e = 0.0;
    for (std::size_t g = 0; g < G; ++g) e += table.count(k, g) * table.rates[g];
    out.expected.push_back(e);
    out.excluded.push_back(!(e > 0.0));
    if (!(e > 0.0)) {
      out.warnings.push_back("site '" + table.site_ids[k] +
                             "' has no expected cases and is excluded");
    }
  }
  return out;
}

Field scale_expected(const Field& e_raw, const Field& y) {
  if (!e_raw.same_shape(y)) throw InputError("E and Y have different shapes");
  const double sum_e = std::accumulate(e_raw.values().begin(), e_raw.values().end(), 0.0);
  const double sum_y = std::accumulate(y.values().begin(), y.values().end(), 0.0);
  if (!(sum_e > 0.0)) throw InputError("expected counts sum to zero");
  if (!(sum_y > 0.0)) throw InputError("observed counts sum to zero; nothing to scale to");
  Field out = e_raw;
  const double factor = sum_y / sum_e;
  for (double& v : out.values()) v *= factor;
  return out;
}

Field spr(const Field& y, const Field& e) {
  if (!e.same_shape(y)) throw InputError("E and Y have different shapes");
  Field out(y.sites(), y.times());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(e.values()[i] > 0.0)) throw InputError("SPR needs positive expected counts");
    out.values()[i] = y.values()[i] / e.values()[i];
  }
  return out;
}

std::string_view to_string(TruthScheme scheme) {
  switch (scheme) {
    case TruthScheme::global: return "global";
    case TruthScheme::adaptive: return "adaptive";
    case TruthScheme::boundary: return "boundary";
    case TruthScheme::independent: return "independent";
  }
  return "global";
}

TruthScheme parse_truth_scheme(std::string_view name) {
  if (name == "global") return TruthScheme::global;
  if (name == "adaptive") return TruthScheme::adaptive;
  if (name == "boundary") return TruthScheme::boundary;
  if (name == "independent") return TruthScheme::independent;
  throw InputError("unknown truth scheme '" + std::string(name) +
                   "' (expected global, adaptive, boundary or independent)");
}

void SimulationConfig::validate() const {
  if (K == 0 || N == 0 || m == 0) throw InputError("K, N and m must be positive");
  if (beta.empty()) throw InputError("beta needs at least an intercept");
  for (double b : beta) {
    if (!std::isfinite(b)) throw InputError("beta entries must be finite");
  }
  Ar1Params{gamma, tau2}.validate();
  if (!(alpha > 0.0)) throw InputError("alpha must be positive");
  if (!(side >= 0.0) || !(boundary_gap >= 0.0)) throw InputError("region sizes must be nonnegative");
  if (!std::isfinite(boundary_step)) throw InputError("boundary_step must be finite");
  if (!(e_lo > 0.0 && e_lo <= e_hi)) throw InputError("E range must satisfy 0 < e_lo <= e_hi");
  if (scheme == TruthScheme::boundary && K < 2) throw InputError("the boundary scenario needs two sites");
}

SimulatedDataset simulate_dataset(const SimulationConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const std::size_t K = config.K;
  const std::size_t N = config.N;
  const double side = config.side > 0.0 ? config.side : std::sqrt(double(K));
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  SimulatedDataset out;
  out.truth.config = config;
  out.truth.cluster.assign(K, 0);
  const bool boundary = config.scheme == TruthScheme::boundary;
  const std::size_t west = boundary ? K / 2 : K;
  for (std::size_t k = 0; k < K; ++k) {
    char id[32];
    std::snprintf(id, sizeof id, "S%04zu", k + 1);
    double x = unif(rng) * side;
    const double y = unif(rng) * side;
    if (boundary) {
      x *= 0.5;
      if (k >= west) {
        x += 0.5 * side + config.boundary_gap;
        out.truth.cluster[k] = 1;
      }
    }
    out.locations.push_back({id, x, y});
  }
  out.frame = SpatialFrame::build(out.locations, config.m);
  const auto& frame = out.frame;
  const std::size_t w = frame.width();
  if (config.target_taper_corr > 0.0) {
    out.truth.config.alpha = calibrate_bandwidth(frame, config.target_taper_corr);
  }
  const double alpha = out.truth.config.alpha;

  auto& truth = out.truth;
  switch (config.scheme) {
    case TruthScheme::global:
      truth.psi = kernel_psi(frame, alpha);
      break;
    case TruthScheme::independent:
      truth.psi = AdaptiveWeightState(K, w);
      for (std::size_t k = 0; k < K; ++k) {
        auto p = truth.psi.psi(k);
        std::fill(p.begin(), p.end(), 0.0);
        p[0] = 1.0;
      }
      break;
    case TruthScheme::adaptive: {
      truth.psi = AdaptiveWeightState(K, w);
      const std::vector<double> ones(w, 1.0);
      for (std::size_t k = 0; k < K; ++k) {
        const auto draw = sample_dirichlet(ones, rng);
        std::copy(draw.begin(), draw.end(), truth.psi.psi(k).begin());
      }
      break;
    }
    case TruthScheme::boundary: {
      // Kernel weights with every cross-cluster neighbour zeroed.
      truth.psi = kernel_psi(frame, alpha);
      for (std::size_t k = 0; k < K; ++k) {
        auto p = truth.psi.psi(k);
        const auto set = frame.taper_set(k);
        double sum = 0.0;
        for (std::size_t r = 0; r < w; ++r) {
          if (truth.cluster[set[r]] != truth.cluster[k]) p[r] = 0.0;
          sum += p[r];
        }
        for (double& v : p) v /= sum;
      }
      break;
    }
  }
  truth.weights = adaptive_weights(frame, truth.psi);

  truth.theta = config.zero_theta ? Field(K, N)
                                  : sample_theta_prior({config.gamma, config.tau2}, K, N, rng);
  truth.phi = convolve(truth.weights, truth.theta);
  if (boundary) {
    for (std::size_t k = west; k < K; ++k) {
      for (std::size_t t = 0; t < N; ++t) truth.phi(k, t) += config.boundary_step;
    }
  }

  auto& panel = out.panel;
  const std::size_t p = config.beta.size();
  for (const auto& loc : out.locations) panel.site_ids.push_back(loc.site_id);
  panel.covariate_names.push_back("intercept");
  for (std::size_t i = 1; i < p; ++i) panel.covariate_names.push_back("x" + std::to_string(i));
  panel.covariate_sds.assign(p, 1.0);
  panel.standardised.assign(p, false);
  for (std::size_t i = 1; i < p; ++i) panel.standardised[i] = true;

  panel.x.assign(K * N * p, 1.0);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  for (std::size_t i = 1; i < p; ++i) {
    double mean = 0.0;
    for (std::size_t c = 0; c < K * N; ++c) {
      panel.x[c * p + i] = std_normal(rng);
      mean += panel.x[c * p + i];
    }
    mean /= double(K * N);
    double ss = 0.0;
    for (std::size_t c = 0; c < K * N; ++c) ss += std::pow(panel.x[c * p + i] - mean, 2);
    const double sd = K * N > 1 ? std::sqrt(ss / double(K * N - 1)) : 1.0;
    for (std::size_t c = 0; c < K * N; ++c) panel.x[c * p + i] /= sd;
  }

  panel.e = Field(K, N);
  std::uniform_real_distribution<double> e_dist(config.e_lo, config.e_hi);
  for (std::size_t k = 0; k < K; ++k) {
    const double site_e = e_dist(rng);
    for (std::size_t t = 0; t < N; ++t) {
      panel.e(k, t) = config.time_varying_e ? e_dist(rng) : site_e;
    }
  }

  panel.y = Field(K, N);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t t = 0; t < N; ++t) {
      double eta = truth.phi(k, t);
      const auto row = panel.covariate_row(k, t);
      for (std::size_t i = 0; i < p; ++i) eta += row[i] * config.beta[i];
      std::poisson_distribution<long long> counts(panel.e(k, t) * std::exp(eta));
      panel.y(k, t) = double(counts(rng));
    }
  }
  panel.validate();
  return out;
}

}  // namespace convospat
