#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "convospat/field.hpp"
#include "convospat/spatial_frame.hpp"

namespace convospat {

enum class WeightScheme { global, adaptive };

std::string_view to_string(WeightScheme scheme);
/// Accepts "global" or "adaptive"; anything else is an InputError.
WeightScheme parse_scheme(std::string_view name);

struct WeightTriplet {
  std::size_t row = 0;
  std::size_t col = 0;
  double weight = 0.0;

  friend bool operator==(const WeightTriplet&, const WeightTriplet&) = default;
};

/// Row-stochastic K x K weight matrix in triplet form. Row k holds exactly
/// one triplet per member of taper_set(k), in taper order, so position r
/// of a row is the r-th closest site. The structural pattern is fixed;
/// a degenerate simplex may leave individual values at 0.
class SparseWeights {
 public:
  SparseWeights() = default;
  SparseWeights(std::size_t sites, std::size_t width, WeightScheme scheme,
                std::vector<WeightTriplet> triplets);

  std::size_t size() const { return sites_; }
  std::size_t width() const { return width_; }
  WeightScheme scheme() const { return scheme_; }
  const std::vector<WeightTriplet>& triplets() const { return triplets_; }

  std::span<const WeightTriplet> row(std::size_t k) const {
    return {triplets_.data() + k * width_, width_};
  }
  /// Overwrites the values of row k (taper order); the pattern is unchanged.
  void set_row(std::size_t k, std::span<const double> values);

  /// w_kj, or 0 when j is outside taper_set(k).
  double at(std::size_t k, std::size_t j) const;

  friend bool operator==(const SparseWeights&, const SparseWeights&) = default;

 private:
  std::size_t sites_ = 0;
  std::size_t width_ = 0;
  WeightScheme scheme_ = WeightScheme::global;
  std::vector<WeightTriplet> triplets_;
};

/// Bandwidth of the global kernel and the bounds of its uniform prior,
/// in units of 1/distance.
struct GlobalWeightParams {
  double alpha = 1e-2;
  double prior_lo = 1e-6;
  double prior_hi = 1e2;

  void validate() const;
};

/// Per-site simplex weights psi_k, one entry per taper rank. Each chain
/// owns and mutates its own copy.
class AdaptiveWeightState {
 public:
  AdaptiveWeightState() = default;
  /// Uniform simplex (1/width, ..., 1/width) at every site.
  AdaptiveWeightState(std::size_t sites, std::size_t width);

  std::size_t sites() const { return sites_; }
  std::size_t width() const { return width_; }

  std::span<double> psi(std::size_t k) { return {values_.data() + k * width_, width_}; }
  std::span<const double> psi(std::size_t k) const {
    return {values_.data() + k * width_, width_};
  }
  const std::vector<double>& values() const& { return values_; }
  std::vector<double>& values() & { return values_; }
  std::vector<double> values() && { return std::move(values_); }

  /// Throws InputError unless every psi_k is nonnegative and sums to 1
  /// within 1e-12.
  void validate() const;

  friend bool operator==(const AdaptiveWeightState&, const AdaptiveWeightState&) = default;

 private:
  std::size_t sites_ = 0;
  std::size_t width_ = 0;
  std::vector<double> values_;
};

/// Normalised tapered kernel weights for row k, in taper order:
/// exp(-alpha d / 2) over the row sum. The Gaussian prefactor cancels.
void kernel_row(const SpatialFrame& frame, std::size_t k, double alpha, std::span<double> out);

/// Tapered global kernel weights. Throws InputError for alpha <= 0.
SparseWeights global_kernel_weights(const SpatialFrame& frame, double alpha);

/// Adaptive weights: w_kj = psi_k[r] when j is the r-th closest site to k.
SparseWeights adaptive_weights(const SpatialFrame& frame, const AdaptiveWeightState& psi);

/// psi_k set to the kernel row, so adaptive_weights reproduces
/// global_kernel_weights exactly.
AdaptiveWeightState kernel_psi(const SpatialFrame& frame, double alpha);

/// One Dirichlet draw. Gamma variates are formed in log space so small
/// concentrations cannot underflow the whole vector to zero.
std::vector<double> sample_dirichlet(std::span<const double> concentration, Rng& rng);

/// Log Dirichlet density at x. A coordinate exactly on the boundary gives
/// +inf for concentration below 1 and -inf above 1.
double dirichlet_log_density(std::span<const double> x, std::span<const double> concentration);

}  // namespace convospat
