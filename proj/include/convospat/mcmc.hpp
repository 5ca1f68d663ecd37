#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "convospat/field.hpp"
#include "convospat/model_core.hpp"
#include "convospat/spatial_frame.hpp"
#include "convospat/weights.hpp"

namespace convospat {

struct ModelPriors {
  RegressionPrior beta;
  double tau2_a = 1.0;
  double tau2_b = 0.01;
  double alpha_lo = 1e-6;
  double alpha_hi = 1e2;

  void validate() const;
};

/// Per-cell likelihood used by the sampler. `gaussian_pseudo` replaces the
/// Poisson term by N(y; ln R, pseudo_sd^2) and exists for conjugate checks
/// of the theta sampler only.
enum class CellModel { poisson, gaussian_pseudo };

/// Read-only inputs shared by every chain of a run.
class ModelContext {
 public:
  ModelContext(const ObservationPanel& panel, const SpatialFrame& frame, WeightScheme scheme,
               ModelPriors priors = {});

  const ObservationPanel& panel() const { return *panel_; }
  const SpatialFrame& frame() const { return *frame_; }
  WeightScheme scheme() const { return scheme_; }
  const ModelPriors& priors() const { return priors_; }

  void use_gaussian_pseudo_likelihood(double sd);
  CellModel cell_model() const { return cell_model_; }

  double cell_loglik(std::size_t k, std::size_t t, double log_rate) const {
    if (cell_model_ == CellModel::poisson) {
      return cell_const_(k, t) + panel_->y(k, t) * log_rate - panel_->e(k, t) * std::exp(log_rate);
    }
    const double d = panel_->y(k, t) - log_rate;
    return -0.5 * d * d / (pseudo_sd_ * pseudo_sd_);
  }

 private:
  const ObservationPanel* panel_;
  const SpatialFrame* frame_;
  WeightScheme scheme_;
  ModelPriors priors_;
  CellModel cell_model_ = CellModel::poisson;
  double pseudo_sd_ = 1.0;
  Field cell_const_;  // y ln e - ln(y!)
};

/// Current values of every sampled quantity plus the caches derived from
/// them. The caches (weights, eta = X beta, phi, log rate, per-cell
/// log-likelihood and its total) are kept consistent after every move.
struct ModelState {
  std::vector<double> beta;
  Field theta;
  double gamma = 0.5;
  double tau2 = 0.1;
  double alpha = 1.0;        // global scheme
  AdaptiveWeightState psi;   // adaptive scheme

  SparseWeights weights;
  Field eta;
  Field phi;
  Field log_rate;
  Field cell_loglik;
  double loglik = 0.0;
};

/// Starting bandwidth: the nearest neighbour gets kernel weight exp(-1)
/// relative to the site itself (2 / median nearest-neighbour distance),
/// clamped to the prior. Falls back to the geometric mean of the bounds
/// when no site has a distinct neighbour.
double initial_bandwidth(const SpatialFrame& frame, const ModelPriors& priors);

/// Deterministic starting point: intercept log((sum Y + 0.5) / sum E), other
/// coefficients 0, theta 0, gamma 0.5, tau2 0.1, alpha from
/// initial_bandwidth, psi the kernel weights at that alpha. Uniform psi
/// makes W a near-singular smoother (singular when two sites share a taper
/// set) from which the adaptive chain drifts very slowly. Throws
/// NumericalError with the offending cell when the initial log-likelihood
/// is not finite.
ModelState initial_state(const ModelContext& ctx);

/// Rebuilds every cache from the parameters.
void refresh_caches(ModelState& state, const ModelContext& ctx);

/// Largest absolute difference between the cached values and a full
/// recompute (weights, phi, log rate, cells, total).
double cache_discrepancy(const ModelState& state, const ModelContext& ctx);

/// Log joint posterior up to the constant of the flat alpha/psi/gamma priors.
double log_posterior(const ModelState& state, const ModelContext& ctx);

/// Gaussian random-walk Metropolis on each coefficient in turn.
/// `accepted` (size p, may be empty) is incremented per accepted coordinate.
std::size_t update_beta(ModelState& state, const ModelContext& ctx, Rng& rng,
                        std::span<const double> scales, std::span<std::size_t> accepted = {});

/// Single-site random-walk Metropolis over every theta_t(s_j), touching
/// only the cells whose weight row contains j. `accepted` may be null.
std::size_t update_theta(ModelState& state, const ModelContext& ctx, Rng& rng, const Field& scales,
                         Field* accepted = nullptr);

/// Conjugate Inverse-Gamma draw of tau2.
void update_tau2(ModelState& state, const ModelContext& ctx, Rng& rng);

/// Random-walk Metropolis on gamma, proposals reflected into [0, 1).
bool update_gamma(ModelState& state, const ModelContext& ctx, Rng& rng, double scale);

/// Random-walk Metropolis on ln(alpha), reflected into the prior bounds.
bool update_alpha(ModelState& state, const ModelContext& ctx, Rng& rng, double log_scale);

/// Floor added to the Dirichlet proposal concentration so zeros are not absorbing.
inline constexpr double kPsiProposalFloor = 0.01;

/// Independent Metropolis-Hastings step for every psi_k with proposal
/// Dirichlet(c_k psi_k + 0.01). `accepted` (size K, may be empty) counts
/// acceptances.
std::size_t update_psi(ModelState& state, const ModelContext& ctx, Rng& rng,
                       std::span<const double> concentration, std::span<std::size_t> accepted = {});

// The joint moves below change the weights and theta together so that phi
// stays put. With theta held fixed, a bandwidth or psi change moves phi and
// is almost always rejected once theta has fitted the data; these moves let
// the weights travel along the likelihood ridge instead.

/// Joint move of ln(alpha) and theta* = W*^{-1} W theta, reflected into the
/// prior bounds. The Jacobian is |det W / det W*|^N. Acceptance is delayed:
/// prior, Jacobian and proposal terms decide first, then the likelihood
/// ratio of the recomputed phi (1 up to rounding) as a second factor.
bool update_alpha_joint(ModelState& state, const ModelContext& ctx, Rng& rng, double log_scale);

/// Joint move of each psi_k and theta_k alone, with proposal
/// Dirichlet(c_k psi_k + 0.01). theta_k is solved from row k so phi_k is
/// unchanged; the other rows holding site k shift by w_ik (theta_k* - theta_k).
/// The Jacobian is (psi_kk / psi_kk*)^N. Costs O(mN) per site. Sites that
/// fall outside their own taper set are skipped.
std::size_t update_psi_joint(ModelState& state, const ModelContext& ctx, Rng& rng,
                             std::span<const double> concentration, std::span<std::size_t> accepted = {});

struct ChainConfig {
  std::size_t n_burnin = 2000;
  std::size_t n_keep = 2000;
  std::size_t thin = 2;
  std::size_t n_chains = 3;
  std::uint64_t seed = 1;

  double scale_beta = 0.01;
  double scale_theta = 0.1;
  double scale_gamma = 0.05;
  double scale_log_alpha = 0.1;
  double psi_concentration = 200.0;
  /// Add the joint weight-and-theta moves to every sweep.
  bool joint_moves = true;

  std::size_t adapt_interval = 50;
  double target_accept = 0.44;
  double target_accept_psi = 0.25;

  /// Keep the phi field every phi_thin-th retained draw; 0 keeps none.
  std::size_t phi_thin = 0;
  bool store_psi = true;
  /// Full cache recompute every this many iterations; 0 disables.
  std::size_t check_cache_every = 0;
  /// Upper bound on concurrently running chains; 0 reads CONVOSPAT_THREADS
  /// and falls back to the hardware concurrency.
  std::size_t max_threads = 0;

  void validate() const;
};

struct ProposalScales {
  std::vector<double> beta;
  Field theta;
  double gamma = 0.0;
  double log_alpha = 0.0;
  std::vector<double> psi_concentration;
  double joint_log_alpha = 0.0;
  std::vector<double> joint_psi_concentration;

  friend bool operator==(const ProposalScales&, const ProposalScales&) = default;
};

/// Acceptance rates over the retained phase, and the proposal scales as
/// they stood when burn-in ended and when the run finished.
struct ChainDiagnostics {
  std::vector<double> beta_accept;
  Field theta_accept;
  double gamma_accept = 0.0;
  double alpha_accept = 0.0;
  std::vector<double> psi_accept;
  double joint_alpha_accept = 0.0;
  std::vector<double> joint_psi_accept;
  ProposalScales scales_after_burnin;
  ProposalScales scales_final;
  std::size_t cache_checks = 0;
};

struct ChainSamples {
  std::vector<std::size_t> iteration;
  std::vector<double> beta;    // draws x p
  std::vector<double> gamma;
  std::vector<double> tau2;
  std::vector<double> alpha;   // global scheme only
  std::vector<double> psi;     // draws x (K * width), adaptive scheme with store_psi
  std::vector<double> loglik;  // draws x (K * N), cell index k * N + t
  std::vector<std::size_t> phi_iteration;
  std::vector<double> phi;     // phi draws x (K * N)
  Field phi_mean;
  std::vector<double> psi_mean;
  ChainDiagnostics diagnostics;

  std::size_t draws() const { return iteration.size(); }
};

using DrawMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct PosteriorSamples {
  WeightScheme scheme = WeightScheme::global;
  std::vector<std::string> beta_names;
  std::size_t sites = 0;
  std::size_t times = 0;
  std::size_t width = 0;
  std::vector<ChainSamples> chains;
  /// Wall-clock duration of the sampling loops (all chains).
  double sampling_seconds = 0.0;

  std::size_t total_draws() const;
  std::vector<double> pooled_beta(std::size_t i) const;
  std::vector<double> pooled_gamma() const;
  std::vector<double> pooled_tau2() const;
  std::vector<double> pooled_alpha() const;
  /// All chains stacked in chain order: draws x (K * N).
  DrawMatrix pooled_loglik() const;
};

/// Per-chain engine: std::seed_seq over (low 32 bits of seed, high 32 bits,
/// chain index, fixed tag) feeding mt19937_64. Results never depend on
/// which thread runs which chain.
Rng chain_rng(std::uint64_t seed, std::size_t chain);

/// Runs one chain from `initial` (burn-in with adaptation, then retention).
ChainSamples run_chain(const ChainConfig& config, const ModelContext& ctx, ModelState initial,
                       Rng& rng);

/// Runs config.n_chains chains from initial_state, concurrently where
/// allowed, and pools them in chain order.
PosteriorSamples run_chains(const ChainConfig& config, const ObservationPanel& panel,
                            const SpatialFrame& frame, WeightScheme scheme,
                            const ModelPriors& priors = {}, std::ostream* log = nullptr);

/// Geweke z-score comparing the first 10% with the last 50% of a chain,
/// with batch-means variance estimates (floor(sqrt(n)) batches per
/// segment). Empty when the batch-means variance is zero. Throws
/// InputError for chains shorter than 100.
std::optional<double> geweke(std::span<const double> chain, double first = 0.1, double last = 0.5);

}  // namespace convospat
