#include "convospat/assessment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "convospat/error.hpp"

namespace convospat {

namespace {

// log(sum_s exp(v_s)) with max shift.
double log_sum_exp(const auto& v) {
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index s = 0; s < v.size(); ++s) top = std::max(top, double(v(s)));
  if (!std::isfinite(top)) return top;
  double sum = 0.0;
  for (Eigen::Index s = 0; s < v.size(); ++s) sum += std::exp(v(s) - top);
  return top + std::log(sum);
}

void require_draws(const DrawMatrix& loglik) {
  if (loglik.rows() < 2) throw InputError("WAIC and LMPL need at least two retained draws");
  if (loglik.cols() < 1) throw InputError("log-likelihood matrix has no cells");
}

}  // namespace

WaicResult waic(const DrawMatrix& loglik) {
  require_draws(loglik);
  const double S = double(loglik.rows());
  WaicResult r;
  for (Eigen::Index c = 0; c < loglik.cols(); ++c) {
    const auto col = loglik.col(c);
    r.lppd += log_sum_exp(col) - std::log(S);
    const double mean = col.mean();
    double ss = 0.0;
    for (Eigen::Index s = 0; s < col.size(); ++s) ss += (col(s) - mean) * (col(s) - mean);
    r.p_w += ss / (S - 1.0);
  }
  r.waic = -2.0 * (r.lppd - r.p_w);
  return r;
}

LmplResult lmpl(const DrawMatrix& loglik) {
  require_draws(loglik);
  const double log_s = std::log(double(loglik.rows()));
  LmplResult r;
  for (Eigen::Index c = 0; c < loglik.cols(); ++c) {
    const Eigen::VectorXd neg = -loglik.col(c);
    const double log_cpo = log_s - log_sum_exp(neg);
    if (log_cpo == -std::numeric_limits<double>::infinity()) ++r.underflow_cells;
    r.lmpl += log_cpo;
  }
  return r;
}

FitStatistics fit_statistics(const DrawMatrix& loglik) {
  const auto w = waic(loglik);
  const auto l = lmpl(loglik);
  FitStatistics f{w.waic, w.p_w, l.lmpl, w.lppd, {}};
  if (l.underflow_cells > 0) {
    f.warnings.push_back(std::to_string(l.underflow_cells) +
                         " cell(s) have a conditional predictive ordinate of 0; LMPL is -inf");
  }
  return f;
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InputError("quantile of an empty sample");
  const double pos = p * double(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - double(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Interval summarize_draws(std::vector<double> draws) {
  std::sort(draws.begin(), draws.end());
  return {quantile_sorted(draws, 0.5), quantile_sorted(draws, 0.025), quantile_sorted(draws, 0.975)};
}

std::vector<ParameterSummary> summarize(const PosteriorSamples& samples,
                                        std::span<const double> effect_sds) {
  if (samples.total_draws() == 0) throw InputError("no posterior draws to summarise");
  const std::size_t p = samples.beta_names.size();
  if (effect_sds.size() != p) throw InputError("one covariate SD per coefficient is required");

  std::vector<ParameterSummary> out;
  for (std::size_t i = 0; i < p; ++i) {
    const Interval b = summarize_draws(samples.pooled_beta(i));
    // exp(sd * beta) is increasing, so its order statistics are the
    // transformed beta order statistics; interpolation is done on the beta
    // scale so the interval maps exactly.
    const double sd = effect_sds[i];
    const Interval rr{std::exp(b.median * sd), std::exp(b.lo95 * sd), std::exp(b.hi95 * sd)};
    out.push_back({"beta_" + samples.beta_names[i], b, rr});
  }
  out.push_back({"gamma", summarize_draws(samples.pooled_gamma()), std::nullopt});
  out.push_back({"tau2", summarize_draws(samples.pooled_tau2()), std::nullopt});
  if (samples.scheme == WeightScheme::global) {
    out.push_back({"alpha", summarize_draws(samples.pooled_alpha()), std::nullopt});
  }
  return out;
}

}  // namespace convospat
