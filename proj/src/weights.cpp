#include "convospat/weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "convospat/error.hpp"

namespace convospat {

std::string_view to_string(WeightScheme scheme) {
  return scheme == WeightScheme::global ? "global" : "adaptive";
}

WeightScheme parse_scheme(std::string_view name) {
  if (name == "global") return WeightScheme::global;
  if (name == "adaptive") return WeightScheme::adaptive;
  throw InputError("unknown model '" + std::string(name) + "' (expected global or adaptive)");
}

SparseWeights::SparseWeights(std::size_t sites, std::size_t width, WeightScheme scheme,
                             std::vector<WeightTriplet> triplets)
    : sites_(sites), width_(width), scheme_(scheme), triplets_(std::move(triplets)) {
  if (triplets_.size() != sites_ * width_) {
    throw InputError("weight triplets do not match " + std::to_string(sites_) + " rows of width " +
                     std::to_string(width_));
  }
}

void SparseWeights::set_row(std::size_t k, std::span<const double> values) {
  if (values.size() != width_) throw InputError("row length does not match the taper width");
  for (std::size_t r = 0; r < width_; ++r) triplets_[k * width_ + r].weight = values[r];
}

double SparseWeights::at(std::size_t k, std::size_t j) const {
  for (const auto& t : row(k)) {
    if (t.col == j) return t.weight;
  }
  return 0.0;
}

void GlobalWeightParams::validate() const {
  if (!(prior_lo > 0.0 && prior_lo < prior_hi && std::isfinite(prior_hi))) {
    throw InputError("alpha prior bounds must satisfy 0 < lo < hi");
  }
  if (!(alpha >= prior_lo && alpha <= prior_hi)) {
    throw InputError("alpha lies outside its prior bounds");
  }
}

AdaptiveWeightState::AdaptiveWeightState(std::size_t sites, std::size_t width)
    : sites_(sites), width_(width), values_(sites * width, width ? 1.0 / double(width) : 0.0) {}

void AdaptiveWeightState::validate() const {
  for (std::size_t k = 0; k < sites_; ++k) {
    double sum = 0.0;
    for (double v : psi(k)) {
      if (!(v >= 0.0)) throw InputError("psi for site " + std::to_string(k) + " has a negative entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      throw InputError("psi for site " + std::to_string(k) + " does not sum to 1");
    }
  }
}

void kernel_row(const SpatialFrame& frame, std::size_t k, double alpha, std::span<double> out) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InputError("kernel bandwidth alpha must be positive");
  const auto dist = frame.taper_distances(k);
  // Exponents are shifted by the smallest distance in the row (the self
  // term, 0), so the leading term is exp(0) = 1 and the sum never underflows.
  const double d0 = dist[0];
  double sum = 0.0;
  for (std::size_t r = 0; r < dist.size(); ++r) {
    out[r] = std::exp(-alpha * (dist[r] - d0) / 2.0);
    sum += out[r];
  }
  for (double& v : out) v /= sum;
}

SparseWeights global_kernel_weights(const SpatialFrame& frame, double alpha) {
  const std::size_t K = frame.size();
  const std::size_t w = frame.width();
  std::vector<WeightTriplet> triplets(K * w);
  std::vector<double> row(w);
  for (std::size_t k = 0; k < K; ++k) {
    kernel_row(frame, k, alpha, row);
    const auto set = frame.taper_set(k);
    for (std::size_t r = 0; r < w; ++r) triplets[k * w + r] = {k, set[r], row[r]};
  }
  return SparseWeights(K, w, WeightScheme::global, std::move(triplets));
}

SparseWeights adaptive_weights(const SpatialFrame& frame, const AdaptiveWeightState& psi) {
  const std::size_t K = frame.size();
  const std::size_t w = frame.width();
  if (psi.sites() != K || psi.width() != w) {
    throw InputError("psi dimensions (" + std::to_string(psi.sites()) + " x " +
                     std::to_string(psi.width()) + ") do not match the taper sets (" +
                     std::to_string(K) + " x " + std::to_string(w) + ")");
  }
  std::vector<WeightTriplet> triplets(K * w);
  for (std::size_t k = 0; k < K; ++k) {
    const auto set = frame.taper_set(k);
    const auto p = psi.psi(k);
    for (std::size_t r = 0; r < w; ++r) triplets[k * w + r] = {k, set[r], p[r]};
  }
  return SparseWeights(K, w, WeightScheme::adaptive, std::move(triplets));
}

AdaptiveWeightState kernel_psi(const SpatialFrame& frame, double alpha) {
  AdaptiveWeightState psi(frame.size(), frame.width());
  for (std::size_t k = 0; k < frame.size(); ++k) kernel_row(frame, k, alpha, psi.psi(k));
  return psi;
}

std::vector<double> sample_dirichlet(std::span<const double> concentration, Rng& rng) {
  if (concentration.empty()) throw InputError("Dirichlet concentration is empty");
  std::vector<double> logs(concentration.size());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < concentration.size(); ++i) {
    const double a = concentration[i];
    if (!(a > 0.0) || !std::isfinite(a)) throw InputError("Dirichlet concentrations must be positive");
    if (a >= 1.0) {
      logs[i] = std::log(std::gamma_distribution<double>(a, 1.0)(rng));
    } else {
      // G(a) = G(a + 1) * U^(1/a)
      double u = unif(rng);
      while (u == 0.0) u = unif(rng);
      logs[i] = std::log(std::gamma_distribution<double>(a + 1.0, 1.0)(rng)) + std::log(u) / a;
    }
  }
  const double top = *std::max_element(logs.begin(), logs.end());
  double sum = 0.0;
  for (double& v : logs) {
    v = std::exp(v - top);
    sum += v;
  }
  for (double& v : logs) v /= sum;
  return logs;
}

double dirichlet_log_density(std::span<const double> x, std::span<const double> concentration) {
  if (x.size() != concentration.size()) throw InputError("Dirichlet dimension mismatch");
  double total = 0.0;
  double out = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = concentration[i];
    total += a;
    out -= std::lgamma(a);
    if (a != 1.0) {
      if (x[i] <= 0.0) return a < 1.0 ? std::numeric_limits<double>::infinity()
                                      : -std::numeric_limits<double>::infinity();
      out += (a - 1.0) * std::log(x[i]);
    }
  }
  return out + std::lgamma(total);
}

}  // namespace convospat
