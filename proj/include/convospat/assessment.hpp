#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "convospat/mcmc.hpp"

namespace convospat {

struct WaicResult {
  double waic = 0.0;
  double p_w = 0.0;
  double lppd = 0.0;
};

/// WAIC from a draws x cells matrix of pointwise log-likelihoods:
/// lppd_c = log mean_s exp(l_sc), p_c = sample variance of l_sc over s,
/// waic = -2 (lppd - p_w). Lower is better. Needs at least two draws.
WaicResult waic(const DrawMatrix& loglik);

struct LmplResult {
  double lmpl = 0.0;
  /// Cells whose conditional predictive ordinate underflowed to 0.
  std::size_t underflow_cells = 0;
};

/// Sum over cells of log CPO, with CPO_c = S / sum_s exp(-l_sc) (the
/// harmonic mean of the pointwise likelihoods). Larger is better.
LmplResult lmpl(const DrawMatrix& loglik);

struct FitStatistics {
  double waic = 0.0;
  double p_w = 0.0;
  double lmpl = 0.0;
  double lppd = 0.0;
  std::vector<std::string> warnings;
};

FitStatistics fit_statistics(const DrawMatrix& loglik);

/// Empirical quantile with linear interpolation between order statistics
/// (position (n - 1) p). `sorted` must be ascending and nonempty.
double quantile_sorted(std::span<const double> sorted, double p);

struct Interval {
  double median = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
};

Interval summarize_draws(std::vector<double> draws);

/// Median and equal-tailed 95% interval of one parameter, plus for
/// regression coefficients the relative rate exp(beta * sd) for a one-SD
/// covariate increase, transformed draw by draw.
struct ParameterSummary {
  std::string name;
  Interval value;
  std::optional<Interval> relative_rate;
};

/// Summaries for beta_<name> (with relative rates), gamma, tau2 and, for
/// the global scheme, alpha. `effect_sds` gives the model-scale SD of each
/// covariate (1 for covariates standardised at load).
std::vector<ParameterSummary> summarize(const PosteriorSamples& samples,
                                        std::span<const double> effect_sds);

}  // namespace convospat
