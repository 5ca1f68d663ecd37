#include "convospat/latent_process.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "convospat/error.hpp"

namespace convospat {

void Ar1Params::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InputError("gamma must lie in [0, 1)");
  if (!(tau2 > 0.0) || !std::isfinite(tau2)) throw InputError("tau2 must be positive");
  if (!(prior_a > 0.0 && prior_b > 0.0)) throw InputError("Inverse-Gamma hyperparameters must be positive");
}

Tridiagonal precision_matrix(double gamma, std::size_t N) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InputError("gamma must lie in [0, 1)");
  if (N == 0) throw InputError("the number of time points must be positive");
  Tridiagonal q;
  q.diag.assign(N, 1.0 + gamma * gamma);
  q.diag[N - 1] = 1.0;
  q.off.assign(N - 1, -gamma);
  return q;
}

TridiagonalCholesky::TridiagonalCholesky(const Tridiagonal& q)
    : diag_(q.size()), sub_(q.off.size()) {
  const std::size_t n = q.size();
  if (n == 0) throw InputError("empty tridiagonal matrix");
  double carry = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double pivot = q.diag[t] - carry;
    if (!(pivot > 0.0)) {
      throw NumericalError("tridiagonal matrix is not positive definite (pivot " +
                           std::to_string(t) + ")");
    }
    diag_[t] = std::sqrt(pivot);
    if (t + 1 < n) {
      sub_[t] = q.off[t] / diag_[t];
      carry = sub_[t] * sub_[t];
    }
  }
}

std::vector<double> TridiagonalCholesky::solve(std::vector<double> rhs) const {
  const std::size_t n = diag_.size();
  if (rhs.size() != n) throw InputError("right-hand side has the wrong length");
  for (std::size_t t = 0; t < n; ++t) {
    if (t > 0) rhs[t] -= sub_[t - 1] * rhs[t - 1];
    rhs[t] /= diag_[t];
  }
  for (std::size_t t = n; t-- > 0;) {
    if (t + 1 < n) rhs[t] -= sub_[t] * rhs[t + 1];
    rhs[t] /= diag_[t];
  }
  return rhs;
}

std::vector<double> precision_inverse(double gamma, std::size_t N) {
  const TridiagonalCholesky chol(precision_matrix(gamma, N));
  std::vector<double> inv(N * N);
  for (std::size_t r = 0; r < N; ++r) {
    std::vector<double> e(N, 0.0);
    e[r] = 1.0;
    const auto col = chol.solve(std::move(e));
    for (std::size_t t = 0; t < N; ++t) inv[t * N + r] = col[t];
  }
  return inv;
}

Field sample_theta_prior(const Ar1Params& params, std::size_t K, std::size_t N, Rng& rng) {
  params.validate();
  const double sd = std::sqrt(params.tau2);
  std::normal_distribution<double> noise(0.0, sd);
  Field theta(K, N);
  for (std::size_t j = 0; j < K; ++j) {
    for (std::size_t t = 0; t < N; ++t) {
      const double mean = t == 0 ? 0.0 : params.gamma * theta(j, t - 1);
      theta(j, t) = mean + noise(rng);
    }
  }
  return theta;
}

Field convolve(const SparseWeights& weights, const Field& theta) {
  if (weights.size() != theta.sites()) {
    throw InputError("weights have " + std::to_string(weights.size()) + " rows but theta has " +
                     std::to_string(theta.sites()) + " sites");
  }
  const std::size_t N = theta.times();
  Field phi(theta.sites(), N);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    auto out = phi.site(k);
    for (const auto& tr : weights.row(k)) {
      const auto in = theta.site(tr.col);
      for (std::size_t t = 0; t < N; ++t) out[t] += tr.weight * in[t];
    }
  }
  return phi;
}

double weight_overlap(const SparseWeights& weights, std::size_t k, std::size_t i) {
  double sum = 0.0;
  for (const auto& a : weights.row(k)) {
    for (const auto& b : weights.row(i)) {
      if (a.col == b.col) sum += a.weight * b.weight;
    }
  }
  return sum;
}

double spatial_correlation(const SparseWeights& weights, std::size_t k, std::size_t i) {
  const double cross = weight_overlap(weights, k, i);
  if (cross == 0.0) return 0.0;
  return cross / std::sqrt(weight_overlap(weights, k, k) * weight_overlap(weights, i, i));
}

std::vector<PairCorrelation> overlapping_pair_correlations(const SparseWeights& weights) {
  const std::size_t K = weights.size();
  std::vector<std::vector<std::size_t>> by_column(K);
  for (const auto& t : weights.triplets()) by_column[t.col].push_back(t.row);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& rows : by_column) {
    for (std::size_t a = 0; a < rows.size(); ++a) {
      for (std::size_t b = 0; b < rows.size(); ++b) {
        if (rows[a] <= rows[b]) pairs.emplace_back(rows[a], rows[b]);
      }
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  std::vector<double> norm2(K);
  for (std::size_t k = 0; k < K; ++k) norm2[k] = weight_overlap(weights, k, k);

  std::vector<PairCorrelation> out;
  out.reserve(pairs.size());
  for (const auto& [k, i] : pairs) {
    const double cross = weight_overlap(weights, k, i);
    out.push_back({k, i, cross == 0.0 ? 0.0 : cross / std::sqrt(norm2[k] * norm2[i])});
  }
  return out;
}

PhiMoments phi_moments(const SparseWeights& weights, const Ar1Params& params, std::size_t N) {
  params.validate();
  const auto qinv = precision_inverse(params.gamma, N);
  const std::size_t K = weights.size();

  PhiMoments m;
  m.variance = Field(K, N);
  for (std::size_t k = 0; k < K; ++k) {
    const double norm2 = weight_overlap(weights, k, k);
    for (std::size_t t = 0; t < N; ++t) m.variance(k, t) = params.tau2 * qinv[t * N + t] * norm2;
  }
  m.temporal_corr.resize(N * N);
  for (std::size_t t = 0; t < N; ++t) {
    for (std::size_t r = 0; r < N; ++r) {
      m.temporal_corr[t * N + r] = qinv[t * N + r] / std::sqrt(qinv[t * N + t] * qinv[r * N + r]);
    }
  }
  m.spatial = overlapping_pair_correlations(weights);
  return m;
}

double median_taper_correlation(const SparseWeights& weights) {
  std::vector<double> corr;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    for (const auto& t : weights.row(k)) {
      if (t.col != k) corr.push_back(spatial_correlation(weights, k, t.col));
    }
  }
  if (corr.empty()) return 1.0;
  const std::size_t mid = corr.size() / 2;
  std::nth_element(corr.begin(), corr.begin() + static_cast<std::ptrdiff_t>(mid), corr.end());
  if (corr.size() % 2 == 1) return corr[mid];
  const double upper = corr[mid];
  const double lower = *std::max_element(corr.begin(), corr.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double calibrate_bandwidth(const SpatialFrame& frame, double target, double lo, double hi) {
  if (!(target > 0.0 && target < 1.0)) throw InputError("target correlation must lie in (0, 1)");
  if (!(lo > 0.0 && lo < hi)) throw InputError("bandwidth bounds must satisfy 0 < lo < hi");
  auto corr = [&](double log_alpha) {
    return median_taper_correlation(global_kernel_weights(frame, std::exp(log_alpha)));
  };
  double a = std::log(lo);
  double b = std::log(hi);
  const double ca = corr(a);
  const double cb = corr(b);
  if ((ca - target) * (cb - target) > 0.0) {
    throw InputError("median taper correlation " + std::to_string(target) +
                     " is not reachable (range " + std::to_string(std::min(ca, cb)) + " to " +
                     std::to_string(std::max(ca, cb)) + ")");
  }
  const bool decreasing = ca > cb;
  for (int it = 0; it < 200 && b - a > 1e-12; ++it) {
    const double mid = 0.5 * (a + b);
    if ((corr(mid) > target) == decreasing) {
      a = mid;
    } else {
      b = mid;
    }
  }
  return std::exp(0.5 * (a + b));
}

}  // namespace convospat
