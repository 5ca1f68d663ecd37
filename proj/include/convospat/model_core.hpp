#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "convospat/field.hpp"
#include "convospat/latent_process.hpp"
#include "convospat/spatial_frame.hpp"
#include "convospat/weights.hpp"

namespace convospat {

/// Counts, scaled expected counts and covariates over K sites x N times.
/// Covariate 0 is the intercept (identically 1).
struct ObservationPanel {
  std::vector<std::string> site_ids;
  Field y;  // nonnegative integer counts
  Field e;  // positive scaled expected counts
  /// Covariates, index ((k * N) + t) * p + i.
  std::vector<double> x;
  std::vector<std::string> covariate_names;
  /// Raw-scale sample SD of each column (1 for intercept and 0/1
  /// indicators). After standardisation a raw-scale effect is beta / sd.
  std::vector<double> covariate_sds;
  /// Per-column flag: column was divided by its SD at load.
  std::vector<bool> standardised;

  std::size_t sites() const { return y.sites(); }
  std::size_t times() const { return y.times(); }
  std::size_t covariates() const { return covariate_names.size(); }

  double covariate(std::size_t k, std::size_t t, std::size_t i) const {
    return x[(k * times() + t) * covariates() + i];
  }
  std::span<const double> covariate_row(std::size_t k, std::size_t t) const {
    return {x.data() + (k * times() + t) * covariates(), covariates()};
  }

  /// Throws InputError on any broken invariant (shapes, integer Y >= 0,
  /// E > 0, intercept column of ones, finite covariates).
  void validate() const;
};

/// Divides every covariate that is neither the intercept nor a 0/1
/// indicator by its sample SD (n - 1 denominator) and records the SD.
/// Constant columns are left unscaled.
void standardise_covariates(ObservationPanel& panel);

/// Gaussian prior N(mean, var_scale I) on beta.
struct RegressionPrior {
  double mean = 0.0;
  double var_scale = 1000.0;

  double log_density(std::span<const double> beta) const;
};

/// ln R = x^T beta + phi, cell by cell.
Field log_rate(const ObservationPanel& panel, std::span<const double> beta, const Field& phi);

/// Poisson log pmf of y at mean e * exp(log_rate), ln(y!) included.
double poisson_cell_loglik(double y, double e, double log_rate);

double poisson_loglik(const ObservationPanel& panel, const Field& log_rate);

Field pointwise_loglik(const ObservationPanel& panel, const Field& log_rate);

/// Log AR(1) prior density of theta (normalising constants included).
double ar1_log_prior(const Field& theta, double gamma, double tau2);

/// Parameters that enter the data model and the theta prior.
struct LatentState {
  std::vector<double> beta;
  Field theta;
  double gamma = 0.5;
  double tau2 = 0.1;
  SparseWeights weights;
};

/// Full conditional of theta_t(s_j) at theta_star, up to a constant.
/// Only the sites whose taper set contains j enter the likelihood part;
/// `phi` must equal W theta for the current state.
double theta_conditional_logdensity(const ObservationPanel& panel, const SpatialFrame& frame,
                                    const LatentState& state, const Field& phi, std::size_t j,
                                    std::size_t t, double theta_star);

}  // namespace convospat
