#include "convospat/model_core.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "convospat/error.hpp"

namespace convospat {

namespace {

std::string cell_name(const ObservationPanel& p, std::size_t k, std::size_t t) {
  return "site '" + p.site_ids[k] + "' time " + std::to_string(t + 1);
}

void require_shape(const ObservationPanel& panel, const Field& f, const char* what) {
  if (f.sites() != panel.sites() || f.times() != panel.times()) {
    throw InputError(std::string(what) + " does not match the panel dimensions");
  }
}

}  // namespace

void ObservationPanel::validate() const {
  const std::size_t K = sites();
  const std::size_t N = times();
  if (K == 0 || N == 0) throw InputError("panel is empty");
  if (!e.same_shape(y)) throw InputError("E and Y have different shapes");
  if (site_ids.size() != K) throw InputError("site_ids do not match the panel");
  const std::size_t p = covariates();
  if (p == 0) throw InputError("panel has no intercept column");
  if (x.size() != K * N * p) throw InputError("covariate array has the wrong size");
  if (covariate_sds.size() != p || standardised.size() != p) {
    throw InputError("covariate metadata does not match the covariate count");
  }
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t t = 0; t < N; ++t) {
      const double yv = y(k, t);
      if (!(yv >= 0.0) || std::floor(yv) != yv || !std::isfinite(yv)) {
        throw InputError("count at " + cell_name(*this, k, t) + " is not a nonnegative integer");
      }
      if (!(e(k, t) > 0.0) || !std::isfinite(e(k, t))) {
        throw InputError("expected count at " + cell_name(*this, k, t) + " must be positive");
      }
      const auto row = covariate_row(k, t);
      if (row[0] != 1.0) throw InputError("first covariate column must be the intercept (all 1)");
      for (double v : row) {
        if (!std::isfinite(v)) throw InputError("non-finite covariate at " + cell_name(*this, k, t));
      }
    }
  }
}

void standardise_covariates(ObservationPanel& panel) {
  const std::size_t p = panel.covariates();
  const std::size_t cells = panel.sites() * panel.times();
  panel.covariate_sds.assign(p, 1.0);
  panel.standardised.assign(p, false);
  for (std::size_t i = 1; i < p; ++i) {
    bool indicator = true;
    double mean = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
      const double v = panel.x[c * p + i];
      if (v != 0.0 && v != 1.0) indicator = false;
      mean += v;
    }
    if (indicator || cells < 2) continue;
    mean /= double(cells);
    double ss = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
      const double d = panel.x[c * p + i] - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / double(cells - 1));
    if (!(sd > 0.0)) continue;
    panel.standardised[i] = true;
    // Already on unit scale (e.g. written back out after standardisation):
    // dividing would only perturb the last bits.
    if (std::abs(sd - 1.0) <= 1e-10) continue;
    for (std::size_t c = 0; c < cells; ++c) panel.x[c * p + i] /= sd;
    panel.covariate_sds[i] = sd;
  }
}

double RegressionPrior::log_density(std::span<const double> beta) const {
  double out = 0.0;
  for (double b : beta) {
    const double d = b - mean;
    out -= 0.5 * d * d / var_scale + 0.5 * std::log(2.0 * std::numbers::pi * var_scale);
  }
  return out;
}

Field log_rate(const ObservationPanel& panel, std::span<const double> beta, const Field& phi) {
  require_shape(panel, phi, "phi");
  if (beta.size() != panel.covariates()) {
    throw InputError("beta has " + std::to_string(beta.size()) + " entries for " +
                     std::to_string(panel.covariates()) + " covariates");
  }
  Field out(panel.sites(), panel.times());
  for (std::size_t k = 0; k < panel.sites(); ++k) {
    for (std::size_t t = 0; t < panel.times(); ++t) {
      const auto row = panel.covariate_row(k, t);
      double eta = 0.0;
      for (std::size_t i = 0; i < beta.size(); ++i) eta += row[i] * beta[i];
      out(k, t) = eta + phi(k, t);
    }
  }
  return out;
}

double poisson_cell_loglik(double y, double e, double log_rate) {
  return y * (std::log(e) + log_rate) - e * std::exp(log_rate) - std::lgamma(y + 1.0);
}

double poisson_loglik(const ObservationPanel& panel, const Field& log_rate) {
  require_shape(panel, log_rate, "log rate");
  double total = 0.0;
  for (std::size_t k = 0; k < panel.sites(); ++k) {
    for (std::size_t t = 0; t < panel.times(); ++t) {
      total += poisson_cell_loglik(panel.y(k, t), panel.e(k, t), log_rate(k, t));
    }
  }
  return total;
}

Field pointwise_loglik(const ObservationPanel& panel, const Field& log_rate) {
  require_shape(panel, log_rate, "log rate");
  Field out(panel.sites(), panel.times());
  for (std::size_t k = 0; k < panel.sites(); ++k) {
    for (std::size_t t = 0; t < panel.times(); ++t) {
      out(k, t) = poisson_cell_loglik(panel.y(k, t), panel.e(k, t), log_rate(k, t));
    }
  }
  return out;
}

double ar1_log_prior(const Field& theta, double gamma, double tau2) {
  double ss = 0.0;
  for (std::size_t j = 0; j < theta.sites(); ++j) {
    const auto s = theta.site(j);
    ss += s[0] * s[0];
    for (std::size_t t = 1; t < s.size(); ++t) {
      const double d = s[t] - gamma * s[t - 1];
      ss += d * d;
    }
  }
  const double n = double(theta.size());
  return -0.5 * ss / tau2 - 0.5 * n * std::log(2.0 * std::numbers::pi * tau2);
}

double theta_conditional_logdensity(const ObservationPanel& panel, const SpatialFrame& frame,
                                    const LatentState& state, const Field& phi, std::size_t j,
                                    std::size_t t, double theta_star) {
  const double delta = theta_star - state.theta(j, t);
  double out = 0.0;
  for (const auto& member : frame.rows_containing(j)) {
    const std::size_t k = member.row;
    const double w = state.weights.row(k)[member.rank].weight;
    const auto row = panel.covariate_row(k, t);
    double eta = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) eta += row[i] * state.beta[i];
    out += poisson_cell_loglik(panel.y(k, t), panel.e(k, t), eta + phi(k, t) + w * delta);
  }

  const std::size_t N = state.theta.times();
  double ss = 0.0;
  if (t == 0) {
    ss += theta_star * theta_star;
  } else {
    const double d = theta_star - state.gamma * state.theta(j, t - 1);
    ss += d * d;
  }
  if (t + 1 < N) {
    const double d = state.theta(j, t + 1) - state.gamma * theta_star;
    ss += d * d;
  }
  return out - 0.5 * ss / state.tau2;
}

}  // namespace convospat
