#pragma once

#include <cstddef>
#include <vector>

#include "convospat/field.hpp"
#include "convospat/weights.hpp"

namespace convospat {

/// AR(1) latent dynamics: theta_1 ~ N(0, tau2), theta_t ~ N(gamma theta_{t-1}, tau2),
/// with an Inverse-Gamma(prior_a, prior_b) prior on tau2 and Uniform(0, 1) on gamma.
struct Ar1Params {
  double gamma = 0.5;
  double tau2 = 0.1;
  double prior_a = 1.0;
  double prior_b = 0.01;

  /// gamma in [0, 1), tau2 > 0, positive hyperparameters.
  void validate() const;
};

/// Symmetric tridiagonal matrix: `diag` has N entries, `off` has N - 1.
struct Tridiagonal {
  std::vector<double> diag;
  std::vector<double> off;

  std::size_t size() const { return diag.size(); }
};

/// Precision of one site's theta series (unit innovation variance):
/// 1 + gamma^2 on the diagonal except 1 in the last slot, -gamma beside it.
Tridiagonal precision_matrix(double gamma, std::size_t N);

/// Cholesky factor of an SPD tridiagonal matrix. Construction throws
/// NumericalError when a pivot is not positive.
class TridiagonalCholesky {
 public:
  explicit TridiagonalCholesky(const Tridiagonal& q);

  std::vector<double> solve(std::vector<double> rhs) const;
  std::size_t size() const { return diag_.size(); }

 private:
  std::vector<double> diag_;  // L(t, t)
  std::vector<double> sub_;   // L(t + 1, t)
};

/// Q^{-1} as a dense row-major N x N array, built column by column from
/// N tridiagonal solves.
std::vector<double> precision_inverse(double gamma, std::size_t N);

/// Independent AR(1) series at K sites, simulated by the recursion.
Field sample_theta_prior(const Ar1Params& params, std::size_t K, std::size_t N, Rng& rng);

/// phi_t(s_k) = sum over the taper set of w_kj theta_t(s_j).
Field convolve(const SparseWeights& weights, const Field& theta);

/// sum_j w_kj w_ij over the union of both taper sets.
double weight_overlap(const SparseWeights& weights, std::size_t k, std::size_t i);

/// Correlation of phi_t(s_k) and phi_t(s_i); 0 when the supports are disjoint.
double spatial_correlation(const SparseWeights& weights, std::size_t k, std::size_t i);

struct PairCorrelation {
  std::size_t k = 0;
  std::size_t i = 0;
  double corr = 0.0;
};

/// Every pair k <= i whose weight rows share a column (self pairs
/// included), with its spatial correlation. Sorted by (k, i).
std::vector<PairCorrelation> overlapping_pair_correlations(const SparseWeights& weights);

/// Closed-form second moments of phi = (W kron I_N) theta.
struct PhiMoments {
  Field variance;                     // K x N
  std::vector<double> temporal_corr;  // N x N row-major, same at every site
  std::vector<PairCorrelation> spatial;

  std::size_t times() const { return variance.times(); }
  double temporal(std::size_t t, std::size_t r) const { return temporal_corr[t * times() + r]; }
};

PhiMoments phi_moments(const SparseWeights& weights, const Ar1Params& params, std::size_t N);

/// Median spatial correlation over pairs (k, j) with j != k in taper_set(k).
/// Used to pick a bandwidth with a target amount of local smoothing.
double median_taper_correlation(const SparseWeights& weights);

/// Global-kernel bandwidth whose median taper correlation equals `target`,
/// by bisection on log alpha within [lo, hi]. Throws InputError when the
/// target is not bracketed.
double calibrate_bandwidth(const SpatialFrame& frame, double target, double lo = 1e-6,
                           double hi = 1e2);

}  // namespace convospat
