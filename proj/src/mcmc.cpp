#include "convospat/mcmc.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "convospat/error.hpp"
#include "convospat/latent_process.hpp"

namespace convospat {

namespace {

// Maps x into [lo, hi] by mirror reflection at both ends. Symmetric as a
// proposal transform, so the Metropolis ratio needs no correction.
double reflect(double x, double lo, double hi) {
  const double width = hi - lo;
  double y = std::fmod(x - lo, 2.0 * width);
  if (y < 0.0) y += 2.0 * width;
  if (y > width) y = 2.0 * width - y;
  return lo + y;
}

bool accept(double log_ratio, Rng& rng) {
  if (!(log_ratio == log_ratio)) return false;  // NaN
  if (log_ratio >= 0.0) return true;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  return std::log(unif(rng)) < log_ratio;
}

double sum_cells(const Field& cells) {
  double total = 0.0;
  for (double v : cells.values()) total += v;
  return total;
}

void rebuild_weights(ModelState& state, const ModelContext& ctx) {
  state.weights = ctx.scheme() == WeightScheme::global
                      ? global_kernel_weights(ctx.frame(), state.alpha)
                      : adaptive_weights(ctx.frame(), state.psi);
}

double ar1_sum_of_squares(const Field& theta, double gamma) {
  double ss = 0.0;
  for (std::size_t j = 0; j < theta.sites(); ++j) {
    const auto s = theta.site(j);
    ss += s[0] * s[0];
    for (std::size_t t = 1; t < s.size(); ++t) {
      const double d = s[t] - gamma * s[t - 1];
      ss += d * d;
    }
  }
  return ss;
}

double adapted(double value, double rate, double target, std::size_t batch, double lo, double hi,
               bool inverse = false) {
  const double step = 2.0 * (rate - target) / std::sqrt(double(batch));
  const double out = value * std::exp(inverse ? -step : step);
  return std::clamp(out, lo, hi);
}

std::size_t resolve_threads(std::size_t requested, std::size_t chains) {
  std::size_t n = requested;
  if (n == 0) {
    n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("CONVOSPAT_THREADS")) {
      const long cap = std::strtol(env, nullptr, 10);
      if (cap > 0) n = std::min<std::size_t>(n, std::size_t(cap));
    }
  }
  return std::clamp<std::size_t>(n, 1, std::max<std::size_t>(1, chains));
}

}  // namespace

double initial_bandwidth(const SpatialFrame& frame, const ModelPriors& priors) {
  std::vector<double> nearest;
  if (frame.width() > 1) {
    for (std::size_t k = 0; k < frame.size(); ++k) {
      const double d = frame.taper_distances(k)[1];
      if (d > 0.0) nearest.push_back(d);
    }
  }
  if (nearest.empty()) return std::sqrt(priors.alpha_lo * priors.alpha_hi);
  const auto mid = nearest.begin() + std::ptrdiff_t(nearest.size() / 2);
  std::nth_element(nearest.begin(), mid, nearest.end());
  return std::clamp(2.0 / *mid, priors.alpha_lo, priors.alpha_hi);
}

void ModelPriors::validate() const {
  if (!(beta.var_scale > 0.0)) throw InputError("beta prior variance must be positive");
  if (!(tau2_a > 0.0 && tau2_b > 0.0)) throw InputError("tau2 prior parameters must be positive");
  GlobalWeightParams{std::sqrt(alpha_lo * alpha_hi), alpha_lo, alpha_hi}.validate();
}

ModelContext::ModelContext(const ObservationPanel& panel, const SpatialFrame& frame,
                           WeightScheme scheme, ModelPriors priors)
    : panel_(&panel), frame_(&frame), scheme_(scheme), priors_(priors) {
  panel.validate();
  priors_.validate();
  if (frame.size() != panel.sites()) {
    throw InputError("spatial frame has " + std::to_string(frame.size()) + " sites, panel has " +
                     std::to_string(panel.sites()));
  }
  cell_const_ = Field(panel.sites(), panel.times());
  for (std::size_t k = 0; k < panel.sites(); ++k) {
    for (std::size_t t = 0; t < panel.times(); ++t) {
      const double y = panel.y(k, t);
      cell_const_(k, t) = y * std::log(panel.e(k, t)) - std::lgamma(y + 1.0);
    }
  }
}

void ModelContext::use_gaussian_pseudo_likelihood(double sd) {
  if (!(sd > 0.0)) throw InputError("pseudo-likelihood sd must be positive");
  cell_model_ = CellModel::gaussian_pseudo;
  pseudo_sd_ = sd;
}

ModelState initial_state(const ModelContext& ctx) {
  const auto& panel = ctx.panel();
  ModelState s;
  s.beta.assign(panel.covariates(), 0.0);
  double sum_y = 0.0;
  double sum_e = 0.0;
  for (double v : panel.y.values()) sum_y += v;
  for (double v : panel.e.values()) sum_e += v;
  s.beta[0] = std::log((sum_y + 0.5) / sum_e);
  s.theta = Field(panel.sites(), panel.times());
  s.gamma = 0.5;
  s.tau2 = 0.1;
  s.alpha = initial_bandwidth(ctx.frame(), ctx.priors());
  s.psi = kernel_psi(ctx.frame(), s.alpha);
  refresh_caches(s, ctx);

  if (!std::isfinite(s.loglik)) {
    std::ostringstream msg;
    msg << "initial log-likelihood is not finite (" << s.loglik << ")";
    for (std::size_t k = 0; k < panel.sites(); ++k) {
      for (std::size_t t = 0; t < panel.times(); ++t) {
        if (!std::isfinite(s.cell_loglik(k, t))) {
          msg << "; first bad cell: site '" << panel.site_ids[k] << "' time " << t + 1
              << " y=" << panel.y(k, t) << " e=" << panel.e(k, t)
              << " log_rate=" << s.log_rate(k, t);
          throw NumericalError(msg.str());
        }
      }
    }
    throw NumericalError(msg.str());
  }
  return s;
}

void refresh_caches(ModelState& state, const ModelContext& ctx) {
  const auto& panel = ctx.panel();
  rebuild_weights(state, ctx);
  state.phi = convolve(state.weights, state.theta);
  Field zero(panel.sites(), panel.times());
  state.eta = log_rate(panel, state.beta, zero);
  state.log_rate = Field(panel.sites(), panel.times());
  state.cell_loglik = Field(panel.sites(), panel.times());
  for (std::size_t k = 0; k < panel.sites(); ++k) {
    for (std::size_t t = 0; t < panel.times(); ++t) {
      state.log_rate(k, t) = state.eta(k, t) + state.phi(k, t);
      state.cell_loglik(k, t) = ctx.cell_loglik(k, t, state.log_rate(k, t));
    }
  }
  state.loglik = sum_cells(state.cell_loglik);
}

double cache_discrepancy(const ModelState& state, const ModelContext& ctx) {
  ModelState fresh = state;
  refresh_caches(fresh, ctx);
  double worst = 0.0;
  auto compare = [&worst](const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
      worst = std::numeric_limits<double>::infinity();
      return;
    }
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  };
  compare(state.phi.values(), fresh.phi.values());
  compare(state.eta.values(), fresh.eta.values());
  compare(state.log_rate.values(), fresh.log_rate.values());
  compare(state.cell_loglik.values(), fresh.cell_loglik.values());
  worst = std::max(worst, std::abs(state.loglik - fresh.loglik));
  const auto& a = state.weights.triplets();
  const auto& b = fresh.weights.triplets();
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].row != b[i].row || a[i].col != b[i].col) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, std::abs(a[i].weight - b[i].weight));
  }
  return worst;
}

double log_posterior(const ModelState& state, const ModelContext& ctx) {
  const auto& pr = ctx.priors();
  double out = state.loglik + pr.beta.log_density(state.beta) +
               ar1_log_prior(state.theta, state.gamma, state.tau2);
  // Inverse-Gamma(a, b) on tau2.
  out += pr.tau2_a * std::log(pr.tau2_b) - std::lgamma(pr.tau2_a) -
         (pr.tau2_a + 1.0) * std::log(state.tau2) - pr.tau2_b / state.tau2;
  return out;
}

std::size_t update_beta(ModelState& state, const ModelContext& ctx, Rng& rng,
                        std::span<const double> scales, std::span<std::size_t> accepted) {
  const auto& panel = ctx.panel();
  const std::size_t p = state.beta.size();
  const std::size_t K = panel.sites();
  const std::size_t N = panel.times();
  const auto& prior = ctx.priors().beta;
  Field proposal_cells(K, N);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::size_t n_accepted = 0;

  for (std::size_t i = 0; i < p; ++i) {
    const double delta = scales[i] * std_normal(rng);
    const double old_b = state.beta[i];
    const double new_b = old_b + delta;
    double new_total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t t = 0; t < N; ++t) {
        const double lr = state.log_rate(k, t) + delta * panel.covariate(k, t, i);
        const double c = ctx.cell_loglik(k, t, lr);
        proposal_cells(k, t) = c;
        new_total += c;
      }
    }
    const double d_old = old_b - prior.mean;
    const double d_new = new_b - prior.mean;
    const double log_ratio =
        new_total - state.loglik - 0.5 * (d_new * d_new - d_old * d_old) / prior.var_scale;
    if (std::isfinite(new_total) && accept(log_ratio, rng)) {
      state.beta[i] = new_b;
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t t = 0; t < N; ++t) {
          const double shift = delta * panel.covariate(k, t, i);
          state.eta(k, t) += shift;
          state.log_rate(k, t) += shift;
        }
      }
      std::swap(state.cell_loglik, proposal_cells);
      state.loglik = new_total;
      ++n_accepted;
      if (!accepted.empty()) ++accepted[i];
    }
  }
  return n_accepted;
}

std::size_t update_theta(ModelState& state, const ModelContext& ctx, Rng& rng, const Field& scales,
                         Field* accepted) {
  const auto& frame = ctx.frame();
  const std::size_t K = state.theta.sites();
  const std::size_t N = state.theta.times();
  const double inv2tau2 = 0.5 / state.tau2;
  const double g = state.gamma;
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> new_cells;
  std::size_t n_accepted = 0;

  for (std::size_t j = 0; j < K; ++j) {
    const auto members = frame.rows_containing(j);
    new_cells.resize(members.size());
    auto th = state.theta.site(j);
    for (std::size_t t = 0; t < N; ++t) {
      const double delta = scales(j, t) * std_normal(rng);
      const double cur = th[t];
      const double prop = cur + delta;

      double d_like = 0.0;
      for (std::size_t m = 0; m < members.size(); ++m) {
        const std::size_t k = members[m].row;
        const double w = state.weights.row(k)[members[m].rank].weight;
        const double c = ctx.cell_loglik(k, t, state.log_rate(k, t) + w * delta);
        new_cells[m] = c;
        d_like += c - state.cell_loglik(k, t);
      }

      // AR(1) terms that involve theta_t(s_j).
      double ss_cur = 0.0;
      double ss_prop = 0.0;
      const double back = t == 0 ? 0.0 : g * th[t - 1];
      ss_cur += (cur - back) * (cur - back);
      ss_prop += (prop - back) * (prop - back);
      if (t + 1 < N) {
        const double fc = th[t + 1] - g * cur;
        const double fp = th[t + 1] - g * prop;
        ss_cur += fc * fc;
        ss_prop += fp * fp;
      }
      const double log_ratio = d_like - inv2tau2 * (ss_prop - ss_cur);

      bool ok = std::isfinite(d_like);
      if (ok && log_ratio < 0.0) ok = std::log(unif(rng)) < log_ratio;
      if (!ok) continue;

      th[t] = prop;
      for (std::size_t m = 0; m < members.size(); ++m) {
        const std::size_t k = members[m].row;
        const double shift = state.weights.row(k)[members[m].rank].weight * delta;
        state.phi(k, t) += shift;
        state.log_rate(k, t) += shift;
        state.cell_loglik(k, t) = new_cells[m];
      }
      ++n_accepted;
      if (accepted) (*accepted)(j, t) += 1.0;
    }
  }
  state.loglik = sum_cells(state.cell_loglik);
  return n_accepted;
}

void update_tau2(ModelState& state, const ModelContext& ctx, Rng& rng) {
  const auto& pr = ctx.priors();
  const double shape = pr.tau2_a + 0.5 * double(state.theta.size());
  const double rate = pr.tau2_b + 0.5 * ar1_sum_of_squares(state.theta, state.gamma);
  std::gamma_distribution<double> precision(shape, 1.0 / rate);
  state.tau2 = 1.0 / precision(rng);
}

bool update_gamma(ModelState& state, const ModelContext&, Rng& rng, double scale) {
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t j = 0; j < state.theta.sites(); ++j) {
    const auto s = state.theta.site(j);
    for (std::size_t t = 1; t < s.size(); ++t) {
      sxx += s[t - 1] * s[t - 1];
      sxy += s[t] * s[t - 1];
    }
  }
  std::normal_distribution<double> std_normal(0.0, 1.0);
  const double prop = reflect(state.gamma + scale * std_normal(rng), 0.0, 1.0);
  if (prop >= 1.0) return false;
  auto log_target = [&](double g) { return -(g * g * sxx - 2.0 * g * sxy) / (2.0 * state.tau2); };
  if (!accept(log_target(prop) - log_target(state.gamma), rng)) return false;
  state.gamma = prop;
  return true;
}

bool update_alpha(ModelState& state, const ModelContext& ctx, Rng& rng, double log_scale) {
  if (ctx.scheme() != WeightScheme::global) throw InputError("alpha is only sampled under the global scheme");
  const auto& pr = ctx.priors();
  std::normal_distribution<double> std_normal(0.0, 1.0);
  const double cur = std::log(state.alpha);
  const double prop = reflect(cur + log_scale * std_normal(rng), std::log(pr.alpha_lo),
                              std::log(pr.alpha_hi));
  const double alpha = std::exp(prop);

  SparseWeights weights = global_kernel_weights(ctx.frame(), alpha);
  Field phi = convolve(weights, state.theta);
  const std::size_t K = phi.sites();
  const std::size_t N = phi.times();
  Field log_rate(K, N);
  Field cells(K, N);
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t t = 0; t < N; ++t) {
      log_rate(k, t) = state.eta(k, t) + phi(k, t);
      cells(k, t) = ctx.cell_loglik(k, t, log_rate(k, t));
      total += cells(k, t);
    }
  }
  // Uniform prior on alpha, walk on ln(alpha): Jacobian alpha.
  const double log_ratio = total - state.loglik + (prop - cur);
  if (!std::isfinite(total) || !accept(log_ratio, rng)) return false;
  state.alpha = alpha;
  state.weights = std::move(weights);
  state.phi = std::move(phi);
  state.log_rate = std::move(log_rate);
  state.cell_loglik = std::move(cells);
  state.loglik = total;
  return true;
}

std::size_t update_psi(ModelState& state, const ModelContext& ctx, Rng& rng,
                       std::span<const double> concentration, std::span<std::size_t> accepted) {
  if (ctx.scheme() != WeightScheme::adaptive) throw InputError("psi is only sampled under the adaptive scheme");
  const auto& frame = ctx.frame();
  const std::size_t K = frame.size();
  const std::size_t w = frame.width();
  const std::size_t N = state.theta.times();
  if (w == 1) return 0;  // the only simplex of dimension 0 is (1)

  std::vector<double> fwd(w);
  std::vector<double> rev(w);
  std::vector<double> phi_new(N);
  std::vector<double> cells_new(N);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::size_t n_accepted = 0;

  for (std::size_t k = 0; k < K; ++k) {
    const auto cur = state.psi.psi(k);
    const double c = concentration[k];
    for (std::size_t r = 0; r < w; ++r) fwd[r] = c * cur[r] + kPsiProposalFloor;
    const std::vector<double> prop = sample_dirichlet(fwd, rng);
    // A coordinate that underflowed to exactly 0 has no usable reverse density.
    if (std::any_of(prop.begin(), prop.end(), [](double v) { return v <= 0.0; })) continue;
    for (std::size_t r = 0; r < w; ++r) rev[r] = c * prop[r] + kPsiProposalFloor;

    const auto set = frame.taper_set(k);
    std::fill(phi_new.begin(), phi_new.end(), 0.0);
    for (std::size_t r = 0; r < w; ++r) {
      const auto th = state.theta.site(set[r]);
      for (std::size_t t = 0; t < N; ++t) phi_new[t] += prop[r] * th[t];
    }
    double d_like = 0.0;
    for (std::size_t t = 0; t < N; ++t) {
      cells_new[t] = ctx.cell_loglik(k, t, state.eta(k, t) + phi_new[t]);
      d_like += cells_new[t] - state.cell_loglik(k, t);
    }
    // Flat Dirichlet(1, ..., 1) prior cancels.
    const double log_ratio =
        d_like + dirichlet_log_density(cur, rev) - dirichlet_log_density(prop, fwd);
    if (!std::isfinite(d_like)) continue;
    if (log_ratio < 0.0 && !(std::log(unif(rng)) < log_ratio)) continue;

    std::copy(prop.begin(), prop.end(), cur.begin());
    state.weights.set_row(k, prop);
    for (std::size_t t = 0; t < N; ++t) {
      state.phi(k, t) = phi_new[t];
      state.log_rate(k, t) = state.eta(k, t) + phi_new[t];
      state.cell_loglik(k, t) = cells_new[t];
    }
    ++n_accepted;
    if (!accepted.empty()) ++accepted[k];
  }
  state.loglik = sum_cells(state.cell_loglik);
  return n_accepted;
}

namespace {

// Solves W x_t = rhs_t for every time column; false when W is singular.
bool solve_weights(const SparseWeights& weights, const Field& rhs, Field& out, double& log_abs_det) {
  const auto K = Eigen::Index(weights.size());
  const auto N = Eigen::Index(rhs.times());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(weights.triplets().size());
  for (const auto& t : weights.triplets()) trip.emplace_back(Eigen::Index(t.row), Eigen::Index(t.col), t.weight);
  Eigen::SparseMatrix<double> m(K, K);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(m);
  if (lu.info() != Eigen::Success) return false;
  log_abs_det = lu.logAbsDeterminant();
  if (!std::isfinite(log_abs_det)) return false;
  Eigen::MatrixXd b(K, N);
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index t = 0; t < N; ++t) b(k, t) = rhs(std::size_t(k), std::size_t(t));
  const Eigen::MatrixXd x = lu.solve(b);
  if (lu.info() != Eigen::Success || !x.allFinite()) return false;
  out = Field(std::size_t(K), std::size_t(N));
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index t = 0; t < N; ++t) out(std::size_t(k), std::size_t(t)) = x(k, t);
  return true;
}

// Log-likelihood of theta under `weights`, filling phi and the cell caches.
double loglik_under(const ModelState& state, const ModelContext& ctx, const SparseWeights& weights,
                    const Field& theta, Field& phi, Field& log_rate, Field& cells) {
  phi = convolve(weights, theta);
  const std::size_t K = phi.sites();
  const std::size_t N = phi.times();
  log_rate = Field(K, N);
  cells = Field(K, N);
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t t = 0; t < N; ++t) {
      log_rate(k, t) = state.eta(k, t) + phi(k, t);
      cells(k, t) = ctx.cell_loglik(k, t, log_rate(k, t));
      total += cells(k, t);
    }
  }
  return total;
}

}  // namespace

bool update_alpha_joint(ModelState& state, const ModelContext& ctx, Rng& rng, double log_scale) {
  if (ctx.scheme() != WeightScheme::global) throw InputError("alpha is only sampled under the global scheme");
  const auto& pr = ctx.priors();
  std::normal_distribution<double> std_normal(0.0, 1.0);
  const double cur = std::log(state.alpha);
  const double prop = reflect(cur + log_scale * std_normal(rng), std::log(pr.alpha_lo),
                              std::log(pr.alpha_hi));
  const double alpha = std::exp(prop);
  const double N = double(state.theta.times());

  SparseWeights weights = global_kernel_weights(ctx.frame(), alpha);
  Field theta;
  Field unused;
  double log_det_new = 0.0;
  double log_det_cur = 0.0;
  if (!solve_weights(weights, state.phi, theta, log_det_new)) return false;
  if (!solve_weights(state.weights, state.phi, unused, log_det_cur)) return false;
  const double d_prior = -(ar1_sum_of_squares(theta, state.gamma) -
                           ar1_sum_of_squares(state.theta, state.gamma)) / (2.0 * state.tau2);
  if (!accept(d_prior + N * (log_det_cur - log_det_new) + (prop - cur), rng)) return false;

  Field phi, log_rate, cells;
  const double total = loglik_under(state, ctx, weights, theta, phi, log_rate, cells);
  if (!std::isfinite(total) || !accept(total - state.loglik, rng)) return false;
  state.alpha = alpha;
  state.weights = std::move(weights);
  state.theta = std::move(theta);
  state.phi = std::move(phi);
  state.log_rate = std::move(log_rate);
  state.cell_loglik = std::move(cells);
  state.loglik = total;
  return true;
}

std::size_t update_psi_joint(ModelState& state, const ModelContext& ctx, Rng& rng,
                             std::span<const double> concentration, std::span<std::size_t> accepted) {
  if (ctx.scheme() != WeightScheme::adaptive) throw InputError("psi is only sampled under the adaptive scheme");
  const auto& frame = ctx.frame();
  const std::size_t K = frame.size();
  const std::size_t w = frame.width();
  const std::size_t N = state.theta.times();
  if (w == 1) return 0;

  std::vector<double> fwd(w), rev(w), theta_new(N);
  std::vector<double> cells_new;
  std::size_t n_accepted = 0;

  for (std::size_t k = 0; k < K; ++k) {
    // Coincident sites can push k out of its own taper set.
    const std::size_t self = frame.rank_of(k, k);
    if (self == w) continue;
    const auto cur = state.psi.psi(k);
    const double c = concentration[k];
    for (std::size_t r = 0; r < w; ++r) fwd[r] = c * cur[r] + kPsiProposalFloor;
    const std::vector<double> prop = sample_dirichlet(fwd, rng);
    if (std::any_of(prop.begin(), prop.end(), [](double v) { return v <= 0.0; })) continue;
    for (std::size_t r = 0; r < w; ++r) rev[r] = c * prop[r] + kPsiProposalFloor;

    // Solve row k for the new theta_k so that phi_k is unchanged.
    const auto set = frame.taper_set(k);
    const auto th = state.theta.site(k);
    for (std::size_t t = 0; t < N; ++t) {
      double v = cur[self] * th[t];
      for (std::size_t r = 0; r < w; ++r) {
        if (r != self) v += (cur[r] - prop[r]) * state.theta(set[r], t);
      }
      theta_new[t] = v / prop[self];
    }
    double ss_cur = th[0] * th[0];
    double ss_new = theta_new[0] * theta_new[0];
    for (std::size_t t = 1; t < N; ++t) {
      const double a = th[t] - state.gamma * th[t - 1];
      const double b = theta_new[t] - state.gamma * theta_new[t - 1];
      ss_cur += a * a;
      ss_new += b * b;
    }

    // Rows holding theta_k see a shifted phi; row k is recomputed in full
    // with the new weights, which reproduces phi_k up to rounding.
    const auto members = frame.rows_containing(k);
    cells_new.resize(members.size() * N);
    double d_like = 0.0;
    for (std::size_t m = 0; m < members.size(); ++m) {
      const std::size_t i = members[m].row;
      for (std::size_t t = 0; t < N; ++t) {
        double phi;
        if (i == k) {
          phi = 0.0;
          for (std::size_t r = 0; r < w; ++r) {
            phi += prop[r] * (r == self ? theta_new[t] : state.theta(set[r], t));
          }
        } else {
          const double wik = state.weights.row(i)[members[m].rank].weight;
          phi = state.phi(i, t) + wik * (theta_new[t] - th[t]);
        }
        const double cell = ctx.cell_loglik(i, t, state.eta(i, t) + phi);
        cells_new[m * N + t] = cell;
        d_like += cell - state.cell_loglik(i, t);
      }
    }
    if (!std::isfinite(d_like)) continue;
    const double log_ratio = d_like - (ss_new - ss_cur) / (2.0 * state.tau2) +
                             double(N) * std::log(cur[self] / prop[self]) +
                             dirichlet_log_density(cur, rev) - dirichlet_log_density(prop, fwd);
    if (!accept(log_ratio, rng)) continue;

    std::copy(prop.begin(), prop.end(), cur.begin());
    state.weights.set_row(k, prop);
    std::copy(theta_new.begin(), theta_new.end(), th.begin());
    for (std::size_t m = 0; m < members.size(); ++m) {
      const std::size_t i = members[m].row;
      const auto row = state.weights.row(i);
      for (std::size_t t = 0; t < N; ++t) {
        double phi = 0.0;
        for (const auto& e : row) phi += e.weight * state.theta(e.col, t);
        state.phi(i, t) = phi;
        state.log_rate(i, t) = state.eta(i, t) + phi;
        state.cell_loglik(i, t) = cells_new[m * N + t];
      }
    }
    ++n_accepted;
    if (!accepted.empty()) ++accepted[k];
  }
  state.loglik = sum_cells(state.cell_loglik);
  return n_accepted;
}

void ChainConfig::validate() const {
  if (n_keep == 0 || thin == 0 || n_chains == 0) {
    throw InputError("n_keep, thin and n_chains must be positive");
  }
  if (adapt_interval == 0) throw InputError("adapt_interval must be positive");
  if (!(target_accept > 0.0 && target_accept < 1.0) ||
      !(target_accept_psi > 0.0 && target_accept_psi < 1.0)) {
    throw InputError("target acceptance rates must lie in (0, 1)");
  }
  if (!(scale_beta > 0.0 && scale_theta > 0.0 && scale_gamma > 0.0 && scale_log_alpha > 0.0 &&
        psi_concentration > 0.0)) {
    throw InputError("proposal scales must be positive");
  }
}

std::size_t PosteriorSamples::total_draws() const {
  std::size_t n = 0;
  for (const auto& c : chains) n += c.draws();
  return n;
}

std::vector<double> PosteriorSamples::pooled_beta(std::size_t i) const {
  std::vector<double> out;
  const std::size_t p = beta_names.size();
  for (const auto& c : chains) {
    for (std::size_t s = 0; s < c.draws(); ++s) out.push_back(c.beta[s * p + i]);
  }
  return out;
}

namespace {
std::vector<double> pool(const std::vector<ChainSamples>& chains,
                         std::vector<double> ChainSamples::*member) {
  std::vector<double> out;
  for (const auto& c : chains) out.insert(out.end(), (c.*member).begin(), (c.*member).end());
  return out;
}
}  // namespace

std::vector<double> PosteriorSamples::pooled_gamma() const { return pool(chains, &ChainSamples::gamma); }
std::vector<double> PosteriorSamples::pooled_tau2() const { return pool(chains, &ChainSamples::tau2); }
std::vector<double> PosteriorSamples::pooled_alpha() const { return pool(chains, &ChainSamples::alpha); }

DrawMatrix PosteriorSamples::pooled_loglik() const {
  const std::size_t cells = sites * times;
  DrawMatrix out(static_cast<Eigen::Index>(total_draws()), static_cast<Eigen::Index>(cells));
  Eigen::Index row = 0;
  for (const auto& c : chains) {
    for (std::size_t s = 0; s < c.draws(); ++s, ++row) {
      for (std::size_t j = 0; j < cells; ++j) out(row, Eigen::Index(j)) = c.loglik[s * cells + j];
    }
  }
  return out;
}

Rng chain_rng(std::uint64_t seed, std::size_t chain) {
  std::seed_seq seq{std::uint32_t(seed & 0xffffffffu), std::uint32_t(seed >> 32),
                    std::uint32_t(chain), std::uint32_t(0x636f6e76u)};
  return Rng(seq);
}

ChainSamples run_chain(const ChainConfig& config, const ModelContext& ctx, ModelState state,
                       Rng& rng) {
  const std::size_t K = state.theta.sites();
  const std::size_t N = state.theta.times();
  const std::size_t p = state.beta.size();
  const bool global = ctx.scheme() == WeightScheme::global;

  ProposalScales scales;
  scales.beta.assign(p, config.scale_beta);
  scales.theta = Field(K, N, config.scale_theta);
  scales.gamma = config.scale_gamma;
  scales.log_alpha = config.scale_log_alpha;
  scales.psi_concentration.assign(K, config.psi_concentration);
  const bool joint = config.joint_moves;
  if (joint) {
    scales.joint_log_alpha = config.scale_log_alpha;
    if (!global) scales.joint_psi_concentration.assign(K, config.psi_concentration);
  }

  std::vector<std::size_t> beta_acc(p, 0);
  Field theta_acc(K, N);
  std::size_t gamma_acc = 0;
  std::size_t alpha_acc = 0;
  std::vector<std::size_t> psi_acc(K, 0);
  std::size_t joint_alpha_acc = 0;
  std::vector<std::size_t> joint_psi_acc(K, 0);
  auto reset = [&] {
    std::fill(beta_acc.begin(), beta_acc.end(), 0);
    std::fill(theta_acc.values().begin(), theta_acc.values().end(), 0.0);
    gamma_acc = alpha_acc = joint_alpha_acc = 0;
    std::fill(psi_acc.begin(), psi_acc.end(), 0);
    std::fill(joint_psi_acc.begin(), joint_psi_acc.end(), 0);
  };

  auto sweep = [&] {
    update_beta(state, ctx, rng, scales.beta, beta_acc);
    update_theta(state, ctx, rng, scales.theta, &theta_acc);
    update_tau2(state, ctx, rng);
    gamma_acc += update_gamma(state, ctx, rng, scales.gamma);
    if (global) {
      alpha_acc += update_alpha(state, ctx, rng, scales.log_alpha);
      if (joint) joint_alpha_acc += update_alpha_joint(state, ctx, rng, scales.joint_log_alpha);
    } else {
      update_psi(state, ctx, rng, scales.psi_concentration, psi_acc);
      if (joint) update_psi_joint(state, ctx, rng, scales.joint_psi_concentration, joint_psi_acc);
    }
  };

  ChainSamples out;
  auto check_cache = [&](std::size_t iter) {
    if (config.check_cache_every == 0 || iter % config.check_cache_every != 0) return;
    const double gap = cache_discrepancy(state, ctx);
    ++out.diagnostics.cache_checks;
    if (!(gap <= 1e-8)) {
      throw NumericalError("cache drift " + std::to_string(gap) + " at iteration " + std::to_string(iter));
    }
  };

  const double ta = config.target_accept;
  std::size_t batch = 0;
  for (std::size_t it = 1; it <= config.n_burnin; ++it) {
    sweep();
    check_cache(it);
    if (it % config.adapt_interval != 0) continue;
    ++batch;
    const double n = double(config.adapt_interval);
    for (std::size_t i = 0; i < p; ++i) {
      scales.beta[i] = adapted(scales.beta[i], beta_acc[i] / n, ta, batch, 1e-6, 5.0);
    }
    for (std::size_t c = 0; c < K * N; ++c) {
      auto& s = scales.theta.values()[c];
      s = adapted(s, theta_acc.values()[c] / n, ta, batch, 1e-5, 5.0);
    }
    scales.gamma = adapted(scales.gamma, gamma_acc / n, ta, batch, 1e-4, 1.0);
    if (global) {
      scales.log_alpha = adapted(scales.log_alpha, alpha_acc / n, ta, batch, 1e-4, 5.0);
      if (joint) {
        scales.joint_log_alpha =
            adapted(scales.joint_log_alpha, joint_alpha_acc / n, ta, batch, 1e-4, 5.0);
      }
    } else {
      for (std::size_t k = 0; k < K; ++k) {
        scales.psi_concentration[k] = adapted(scales.psi_concentration[k], psi_acc[k] / n,
                                              config.target_accept_psi, batch, 0.5, 1e7, true);
      }
      if (joint) {
        for (std::size_t k = 0; k < K; ++k) {
          auto& c = scales.joint_psi_concentration[k];
          c = adapted(c, joint_psi_acc[k] / n, config.target_accept_psi, batch, 0.5, 1e7, true);
        }
      }
    }
    reset();
  }
  reset();
  out.diagnostics.scales_after_burnin = scales;

  const std::size_t cells = K * N;
  const std::size_t draws = config.n_keep / config.thin;
  out.iteration.reserve(draws);
  out.loglik.reserve(draws * cells);
  out.phi_mean = Field(K, N);
  if (!global) out.psi_mean.assign(K * state.psi.width(), 0.0);
  std::size_t kept = 0;

  for (std::size_t it = 1; it <= config.n_keep; ++it) {
    sweep();
    check_cache(config.n_burnin + it);
    if (it % config.thin != 0) continue;
    ++kept;
    out.iteration.push_back(config.n_burnin + it);
    out.beta.insert(out.beta.end(), state.beta.begin(), state.beta.end());
    out.gamma.push_back(state.gamma);
    out.tau2.push_back(state.tau2);
    if (global) {
      out.alpha.push_back(state.alpha);
    } else {
      const auto& v = state.psi.values();
      if (config.store_psi) out.psi.insert(out.psi.end(), v.begin(), v.end());
      for (std::size_t i = 0; i < v.size(); ++i) out.psi_mean[i] += v[i];
    }
    out.loglik.insert(out.loglik.end(), state.cell_loglik.values().begin(),
                      state.cell_loglik.values().end());
    for (std::size_t c = 0; c < cells; ++c) out.phi_mean.values()[c] += state.phi.values()[c];
    if (config.phi_thin > 0 && kept % config.phi_thin == 0) {
      out.phi_iteration.push_back(config.n_burnin + it);
      out.phi.insert(out.phi.end(), state.phi.values().begin(), state.phi.values().end());
    }
  }
  if (kept > 0) {
    for (double& v : out.phi_mean.values()) v /= double(kept);
    for (double& v : out.psi_mean) v /= double(kept);
  }

  auto& d = out.diagnostics;
  const double n = double(config.n_keep);
  for (std::size_t i = 0; i < p; ++i) d.beta_accept.push_back(beta_acc[i] / n);
  d.theta_accept = theta_acc;
  for (double& v : d.theta_accept.values()) v /= n;
  d.gamma_accept = gamma_acc / n;
  d.alpha_accept = alpha_acc / n;
  for (std::size_t k = 0; k < K; ++k) d.psi_accept.push_back(psi_acc[k] / n);
  d.joint_alpha_accept = joint_alpha_acc / n;
  if (joint && !global) {
    for (std::size_t k = 0; k < K; ++k) d.joint_psi_accept.push_back(joint_psi_acc[k] / n);
  }
  d.scales_final = scales;
  return out;
}

PosteriorSamples run_chains(const ChainConfig& config, const ObservationPanel& panel,
                            const SpatialFrame& frame, WeightScheme scheme,
                            const ModelPriors& priors, std::ostream* log) {
  config.validate();
  const ModelContext ctx(panel, frame, scheme, priors);
  const ModelState start = initial_state(ctx);

  PosteriorSamples out;
  out.scheme = scheme;
  out.beta_names = panel.covariate_names;
  out.sites = panel.sites();
  out.times = panel.times();
  out.width = frame.width();
  out.chains.resize(config.n_chains);

  std::vector<std::exception_ptr> errors(config.n_chains);
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t c = next++; c < config.n_chains; c = next++) {
      try {
        Rng rng = chain_rng(config.seed, c);
        out.chains[c] = run_chain(config, ctx, start, rng);
        if (log) {
          std::lock_guard lock(log_mutex);
          *log << "chain " << c + 1 << " finished: " << out.chains[c].draws() << " draws\n";
        }
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };

  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n_threads = resolve_threads(config.max_threads, config.n_chains);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }
  out.sampling_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace convospat
