#include "convospat/commands.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>

#include "convospat/assessment.hpp"
#include "convospat/io.hpp"
#include "convospat/latent_process.hpp"
#include "convospat/mcmc.hpp"
#include "convospat/spatial_frame.hpp"
#include "convospat/standardization.hpp"
#include "convospat/weights.hpp"

namespace convospat {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kCommands{"simulate", "fit", "assess", "correlations", "summarize"};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

WeightScheme model_of(const FlatConfig& s) {
  const std::string name = s.get_string("model", "global");
  try {
    return parse_scheme(name);
  } catch (const InputError&) {
    throw UsageError("unknown model '" + name + "' (expected global or adaptive)");
  }
}

std::size_t positive(const FlatConfig& s, const std::string& key, long long fallback) {
  const long long v = s.get_int(key, fallback);
  if (v <= 0) throw InputError("'" + key + "' must be a positive integer");
  return std::size_t(v);
}

std::size_t nonnegative(const FlatConfig& s, const std::string& key, long long fallback) {
  const long long v = s.get_int(key, fallback);
  if (v < 0) throw InputError("'" + key + "' must be nonnegative");
  return std::size_t(v);
}

std::uint64_t seed_of(const FlatConfig& s) {
  const long long v = s.get_int("seed", 1);
  if (v < 0) throw InputError("'seed' must be nonnegative");
  return std::uint64_t(v);
}

void print_written(std::ostream& log, const fs::path& path) { log << path.string() << '\n'; }

std::string or_na(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

void write_summaries(const fs::path& path, const std::vector<ParameterSummary>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "name,median,lo95,hi95,rr_median,rr_lo95,rr_hi95\n";
  for (const auto& r : rows) {
    out << r.name << ',' << format_double(r.value.median) << ',' << format_double(r.value.lo95) << ','
        << format_double(r.value.hi95);
    if (r.relative_rate) {
      out << ',' << format_double(r.relative_rate->median) << ','
          << format_double(r.relative_rate->lo95) << ',' << format_double(r.relative_rate->hi95);
    } else {
      out << ",NA,NA,NA";
    }
    out << '\n';
  }
}

fs::path samples_dir(const RunConfig& config) {
  const fs::path dir = config.settings.has("samples") ? config.path("samples", "") : config.out_dir();
  if (!fs::exists(dir / "samples.txt")) throw IoError("no samples found in " + dir.string());
  return dir;
}

std::vector<ParameterSummary> summaries_for(const StoredSamples& stored) {
  std::vector<double> effect_sds(stored.samples.beta_names.size(), 1.0);
  if (stored.meta.has("effect_sds")) effect_sds = stored.meta.get_doubles("effect_sds");
  return summarize(stored.samples, effect_sds);
}

ExpectedCounts expected_from_list_sizes(const RunConfig& config, const std::vector<Location>& locations,
                                        std::set<std::string>& skip, std::ostream& log) {
  const ListSizeTable table = read_list_sizes(config.path("listsizes", ""), config.path("rates", ""));
  ExpectedCounts e = expected_counts(table);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < table.site_ids.size(); ++k) index[table.site_ids[k]] = k;
  ExpectedCounts out;
  out.warnings = e.warnings;
  for (const auto& loc : locations) {
    const auto it = index.find(loc.site_id);
    if (it == index.end() || e.excluded[it->second]) {
      skip.insert(loc.site_id);
      out.warnings.push_back("site " + loc.site_id + " has no list-size data and is excluded");
      continue;
    }
    out.expected.push_back(e.expected[it->second]);
    out.excluded.push_back(false);
  }
  for (const auto& w : out.warnings) log << "warning: " << w << '\n';
  return out;
}

}  // namespace

const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys{
      // shared
      "out", "seed", "m", "model", "threads",
      // simulate
      "K", "N", "beta", "gamma", "tau2", "truth", "alpha", "target_taper_corr", "side",
      "boundary_gap", "boundary_step", "e_lo", "e_hi", "time_varying_e", "zero_theta",
      // fit
      "observations", "locations", "listsizes", "rates", "n_burnin", "n_keep", "thin", "n_chains",
      "scale_beta", "scale_theta", "scale_gamma", "scale_log_alpha", "psi_concentration",
      "adapt_interval", "target_accept", "target_accept_psi", "phi_thin", "store_psi", "joint_moves",
      "check_cache_every", "beta_prior_var", "tau2_a", "tau2_b", "alpha_lo", "alpha_hi",
      // post-processing
      "samples"};
  return keys;
}

RunConfig RunConfig::make(const std::string& command, const fs::path& config_file,
                          const std::map<std::string, std::string>& overrides) {
  if (kCommands.count(command) == 0) throw UsageError("unknown command '" + command + "'");
  RunConfig rc;
  rc.command = command;
  if (!config_file.empty()) {
    if (!fs::exists(config_file)) throw IoError("config file not found: " + config_file.string());
    rc.settings = FlatConfig::load(config_file);
    rc.config_dir = config_file.parent_path().empty() ? fs::path(".") : config_file.parent_path();
  }
  for (const auto& [k, v] : overrides) {
    rc.settings.set(k, v);
    rc.overridden.insert(k);
  }
  try {
    rc.settings.require_known(known_config_keys());
  } catch (const InputError& e) {
    throw UsageError(e.what());
  }
  if (rc.settings.has("model")) model_of(rc.settings);
  return rc;
}

fs::path RunConfig::path(const std::string& key, const std::string& fallback) const {
  if (!settings.has(key)) {
    if (fallback.empty()) throw InputError("missing setting '" + key + "'");
    return config_dir / fallback;
  }
  const fs::path p = settings.get_string(key);
  if (p.is_absolute() || overridden.count(key) != 0) return p;
  return config_dir / p;
}

fs::path RunConfig::out_dir() const { return path("out", "out"); }

void cmd_simulate(const RunConfig& config, std::ostream& log) {
  const auto& s = config.settings;
  SimulationConfig sim;
  sim.K = positive(s, "K", long(sim.K));
  sim.N = positive(s, "N", long(sim.N));
  sim.m = positive(s, "m", long(sim.m));
  if (s.has("beta")) sim.beta = s.get_doubles("beta");
  sim.gamma = s.get_double("gamma", sim.gamma);
  sim.tau2 = s.get_double("tau2", sim.tau2);
  sim.scheme = parse_truth_scheme(s.get_string("truth", "global"));
  sim.alpha = s.get_double("alpha", sim.alpha);
  sim.target_taper_corr = s.get_double("target_taper_corr", 0.0);
  sim.side = s.get_double("side", sim.side);
  sim.boundary_gap = s.get_double("boundary_gap", sim.boundary_gap);
  sim.boundary_step = s.get_double("boundary_step", sim.boundary_step);
  sim.e_lo = s.get_double("e_lo", sim.e_lo);
  sim.e_hi = s.get_double("e_hi", sim.e_hi);
  sim.time_varying_e = s.get_bool("time_varying_e", false);
  sim.zero_theta = s.get_bool("zero_theta", false);
  sim.seed = seed_of(s);

  const SimulatedDataset data = simulate_dataset(sim);
  const fs::path out = config.out_dir();
  ensure_dir(out);
  for (const auto& w : data.frame.warnings()) log << "warning: " << w << '\n';
  write_panel(out / "observations.csv", data.panel);
  write_locations(out / "locations.csv", data.locations);
  write_weights(out / "weights.csv", data.truth.weights);
  write_truth(out, data.truth, data.panel.site_ids);
  for (const char* f : {"observations.csv", "locations.csv", "weights.csv", "truth.txt", "truth_phi.csv",
                        "truth_psi.csv"}) {
    print_written(log, out / f);
  }
}

void cmd_fit(const RunConfig& config, std::ostream& log) {
  const auto& s = config.settings;
  const WeightScheme scheme = model_of(s);
  const std::size_t m = positive(s, "m", 8);

  ChainConfig chain;
  chain.n_burnin = nonnegative(s, "n_burnin", long(chain.n_burnin));
  chain.n_keep = positive(s, "n_keep", long(chain.n_keep));
  chain.thin = positive(s, "thin", long(chain.thin));
  chain.n_chains = positive(s, "n_chains", long(chain.n_chains));
  chain.seed = seed_of(s);
  chain.scale_beta = s.get_double("scale_beta", chain.scale_beta);
  chain.scale_theta = s.get_double("scale_theta", chain.scale_theta);
  chain.scale_gamma = s.get_double("scale_gamma", chain.scale_gamma);
  chain.scale_log_alpha = s.get_double("scale_log_alpha", chain.scale_log_alpha);
  chain.psi_concentration = s.get_double("psi_concentration", chain.psi_concentration);
  chain.adapt_interval = positive(s, "adapt_interval", long(chain.adapt_interval));
  chain.target_accept = s.get_double("target_accept", chain.target_accept);
  chain.target_accept_psi = s.get_double("target_accept_psi", chain.target_accept_psi);
  chain.phi_thin = nonnegative(s, "phi_thin", 0);
  chain.store_psi = s.get_bool("store_psi", true);
  chain.joint_moves = s.get_bool("joint_moves", true);
  chain.check_cache_every = nonnegative(s, "check_cache_every", 0);
  chain.max_threads = nonnegative(s, "threads", 0);
  chain.validate();

  ModelPriors priors;
  priors.beta.var_scale = s.get_double("beta_prior_var", priors.beta.var_scale);
  priors.tau2_a = s.get_double("tau2_a", priors.tau2_a);
  priors.tau2_b = s.get_double("tau2_b", priors.tau2_b);
  priors.alpha_lo = s.get_double("alpha_lo", priors.alpha_lo);
  priors.alpha_hi = s.get_double("alpha_hi", priors.alpha_hi);
  priors.validate();

  std::vector<Location> locations = read_locations(config.path("locations", "locations.csv"));
  std::set<std::string> skip;
  std::optional<ExpectedCounts> expected;
  if (s.has("listsizes") || s.has("rates")) expected = expected_from_list_sizes(config, locations, skip, log);
  if (!skip.empty()) {
    std::erase_if(locations, [&](const Location& l) { return skip.count(l.site_id) != 0; });
  }
  ObservationPanel panel = read_observations(config.path("observations", "observations.csv"), locations, skip);
  if (expected) {
    Field raw(panel.sites(), panel.times());
    for (std::size_t k = 0; k < panel.sites(); ++k) {
      for (std::size_t t = 0; t < panel.times(); ++t) raw(k, t) = expected->expected[k];
    }
    panel.e = scale_expected(raw, panel.y);
  }
  const SpatialFrame frame = SpatialFrame::build(locations, m);
  for (const auto& w : frame.warnings()) log << "warning: " << w << '\n';

  PosteriorSamples samples = run_chains(chain, panel, frame, scheme, priors, &log);

  const fs::path out = config.out_dir();
  ensure_dir(out);
  FlatConfig extra;
  extra.set("m", std::to_string(m));
  extra.set("seed", std::to_string(chain.seed));
  extra.set("n_burnin", std::to_string(chain.n_burnin));
  extra.set("n_keep", std::to_string(chain.n_keep));
  extra.set("thin", std::to_string(chain.thin));
  std::vector<std::string> sds;
  std::vector<std::string> ones;
  for (double v : panel.covariate_sds) {
    sds.push_back(format_double(v));
    ones.push_back("1");
  }
  extra.set("covariate_sds", [&] {
    std::string j;
    for (const auto& v : sds) j += (j.empty() ? "" : ",") + v;
    return j;
  }());
  extra.set("effect_sds", [&] {
    std::string j;
    for (const auto& v : ones) j += (j.empty() ? "" : ",") + v;
    return j;
  }());
  write_samples(out, samples, panel.site_ids, extra);
  write_locations(out / "locations.csv", locations);

  FlatConfig diag;
  for (std::size_t c = 0; c < samples.chains.size(); ++c) {
    const auto& ch = samples.chains[c];
    const auto& d = ch.diagnostics;
    const std::string prefix = "chain" + std::to_string(c + 1) + "_";
    const std::size_t p = samples.beta_names.size();
    auto geweke_of = [&](const std::vector<double>& v) -> std::string {
      if (v.size() < 100) return "NA";
      return or_na(geweke(v));
    };
    for (std::size_t i = 0; i < p; ++i) {
      std::vector<double> b(ch.draws());
      for (std::size_t r = 0; r < ch.draws(); ++r) b[r] = ch.beta[r * p + i];
      diag.set(prefix + "geweke_beta_" + samples.beta_names[i], geweke_of(b));
      diag.set(prefix + "accept_beta_" + samples.beta_names[i], format_double(d.beta_accept[i]));
    }
    diag.set(prefix + "geweke_gamma", geweke_of(ch.gamma));
    diag.set(prefix + "geweke_tau2", geweke_of(ch.tau2));
    diag.set(prefix + "accept_gamma", format_double(d.gamma_accept));
    double theta_mean = 0.0;
    for (double v : d.theta_accept.values()) theta_mean += v;
    theta_mean /= double(std::max<std::size_t>(1, d.theta_accept.values().size()));
    diag.set(prefix + "accept_theta_mean", format_double(theta_mean));
    if (scheme == WeightScheme::global) {
      diag.set(prefix + "geweke_alpha", geweke_of(ch.alpha));
      diag.set(prefix + "accept_alpha", format_double(d.alpha_accept));
    } else {
      double psi_mean = 0.0;
      for (double v : d.psi_accept) psi_mean += v;
      psi_mean /= double(std::max<std::size_t>(1, d.psi_accept.size()));
      diag.set(prefix + "accept_psi_mean", format_double(psi_mean));
    }
  }
  diag.save(out / "diagnostics.txt");

  FlatConfig timing;
  timing.set("model", std::string(to_string(scheme)));
  timing.set("m", std::to_string(m));
  timing.set("n_chains", std::to_string(chain.n_chains));
  timing.set("sampling_seconds", format_double(samples.sampling_seconds));
  timing.save(out / "timing.txt");

  for (std::size_t c = 0; c < samples.chains.size(); ++c) {
    print_written(log, out / ("samples_chain" + std::to_string(c + 1) + ".csv"));
  }
  for (const char* f : {"loglik.csv", "phi_mean.csv", "samples.txt", "diagnostics.txt", "timing.txt"}) {
    print_written(log, out / f);
  }
}

void cmd_assess(const RunConfig& config, std::ostream& log) {
  const fs::path dir = samples_dir(config);
  const StoredSamples stored = read_samples(dir);
  const FitStatistics fit = fit_statistics(stored.samples.pooled_loglik());
  const fs::path out = config.settings.has("out") ? config.out_dir() : dir;
  ensure_dir(out);
  FlatConfig report;
  report.set("model", std::string(to_string(stored.samples.scheme)));
  report.set("waic", format_double(fit.waic));
  report.set("p_w", format_double(fit.p_w));
  report.set("lmpl", format_double(fit.lmpl));
  report.set("lppd", format_double(fit.lppd));
  report.set("draws", std::to_string(stored.samples.total_draws()));
  report.save(out / "report.txt");
  for (const auto& w : fit.warnings) log << "warning: " << w << '\n';
  write_summaries(out / "summaries.csv", summaries_for(stored));
  print_written(log, out / "report.txt");
  print_written(log, out / "summaries.csv");
}

void cmd_summarize(const RunConfig& config, std::ostream& log) {
  const fs::path dir = samples_dir(config);
  const StoredSamples stored = read_samples(dir);
  const fs::path out = config.settings.has("out") ? config.out_dir() : dir;
  ensure_dir(out);
  write_summaries(out / "summaries.csv", summaries_for(stored));
  print_written(log, out / "summaries.csv");
}

void cmd_correlations(const RunConfig& config, std::ostream& log) {
  const fs::path dir = samples_dir(config);
  const StoredSamples stored = read_samples(dir);
  const auto& smp = stored.samples;
  const std::vector<Location> locations = read_locations(dir / "locations.csv");
  const std::size_t m = std::size_t(stored.meta.get_int("m"));
  const SpatialFrame frame = SpatialFrame::build(locations, m);
  if (frame.size() != smp.sites || frame.width() != smp.width) {
    throw InputError("locations.csv does not match the stored samples");
  }

  std::vector<SparseWeights> draws;
  if (smp.scheme == WeightScheme::global) {
    for (double a : smp.pooled_alpha()) draws.push_back(global_kernel_weights(frame, a));
  } else {
    const std::size_t cells = smp.sites * smp.width;
    for (const auto& ch : smp.chains) {
      if (ch.psi.size() != ch.draws() * cells) {
        throw IoError("psi draws were not stored; refit with store_psi=true");
      }
      AdaptiveWeightState psi(smp.sites, smp.width);
      for (std::size_t d = 0; d < ch.draws(); ++d) {
        std::copy_n(ch.psi.begin() + std::ptrdiff_t(d * cells), cells, psi.values().begin());
        draws.push_back(adaptive_weights(frame, psi));
      }
    }
  }
  if (draws.empty()) throw InputError("no retained draws");

  // Structural overlap depends only on the taper sets, so the pair list is
  // shared by every draw.
  const auto pairs = overlapping_pair_correlations(adaptive_weights(frame, AdaptiveWeightState(smp.sites, smp.width)));
  std::vector<double> values(draws.size());
  const fs::path out = config.settings.has("out") ? config.out_dir() : dir;
  ensure_dir(out);
  std::ofstream csv(out / "correlations.csv", std::ios::binary);
  if (!csv) throw IoError("cannot write " + (out / "correlations.csv").string());
  csv << "site_k,site_i,distance,spatial_corr\n";
  for (const auto& pc : pairs) {
    for (std::size_t d = 0; d < draws.size(); ++d) values[d] = spatial_correlation(draws[d], pc.k, pc.i);
    std::sort(values.begin(), values.end());
    csv << locations[pc.k].site_id << ',' << locations[pc.i].site_id << ','
        << format_double(frame.distance(pc.k, pc.i)) << ',' << format_double(quantile_sorted(values, 0.5))
        << '\n';
  }
  print_written(log, out / "correlations.csv");
}

void run_command(const RunConfig& config, std::ostream& log) {
  if (config.command == "simulate") return cmd_simulate(config, log);
  if (config.command == "fit") return cmd_fit(config, log);
  if (config.command == "assess") return cmd_assess(config, log);
  if (config.command == "correlations") return cmd_correlations(config, log);
  if (config.command == "summarize") return cmd_summarize(config, log);
  throw UsageError("unknown command '" + config.command + "'");
}

std::string error_category(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return "usage";
  if (dynamic_cast<const InputError*>(&e)) return "input";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  if (dynamic_cast<const NumericalError*>(&e)) return "numerical";
  return "internal";
}

int exit_code_for(const std::string& category) {
  if (category == "usage") return 2;
  if (category == "input") return 3;
  if (category == "io") return 4;
  if (category == "numerical") return 5;
  return 1;
}

}  // namespace convospat
