#include "convospat/io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "convospat/error.hpp"

namespace convospat {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::string at_line(const CsvTable& t, std::size_t row) {
  return t.source + " line " + std::to_string(t.lines[row]);
}

std::size_t parse_index(std::string_view s, const std::string& where, const char* what) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw InputError(where + ": " + what + " must be a positive integer, got '" + std::string(s) + "'");
  }
  return out;
}

double parse_at(std::string_view s, const std::string& where, const char* what) {
  try {
    return parse_double(s);
  } catch (const InputError&) {
    throw InputError(where + ": " + what + " is not a number ('" + std::string(s) + "')");
  }
}

void require_columns(const CsvTable& t, const std::vector<std::string>& expected) {
  if (t.header.size() < expected.size() ||
      !std::equal(expected.begin(), expected.end(), t.header.begin())) {
    std::string want;
    for (const auto& e : expected) want += (want.empty() ? "" : ",") + e;
    throw InputError(t.source + ": header must start with '" + want + "'");
  }
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
  return out;
}

std::string cell_label(const std::string& site, std::size_t t) {
  return site + ":" + std::to_string(t + 1);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '+')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw InputError("not a number: '" + std::string(s) + "'");
  }
  return out;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw InputError(source + ": missing column '" + name + "'");
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable t;
  t.source = path.filename().string();
  std::string line;
  std::size_t lineno = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      const auto comma = s.find(',', start);
      out.push_back(s.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return out;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (line.empty()) continue;
    auto fields = split(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw InputError(t.source + " line " + std::to_string(lineno) + ": expected " +
                       std::to_string(t.header.size()) + " fields, found " +
                       std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.lines.push_back(lineno);
  }
  if (t.header.empty()) throw InputError(t.source + ": file is empty");
  return t;
}

std::vector<Location> read_locations(const fs::path& path) {
  const CsvTable t = read_csv(path);
  require_columns(t, {"site_id", "easting", "northing"});
  std::vector<Location> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    out.push_back({row[0], parse_at(row[1], at_line(t, r), "easting"),
                   parse_at(row[2], at_line(t, r), "northing")});
  }
  return out;
}

void write_locations(const fs::path& path, const std::vector<Location>& locations) {
  auto out = open_out(path);
  out << "site_id,easting,northing\n";
  for (const auto& l : locations) {
    out << l.site_id << ',' << format_double(l.easting) << ',' << format_double(l.northing) << '\n';
  }
}

ObservationPanel read_observations(const fs::path& path, const std::vector<Location>& locations,
                                   const std::set<std::string>& skip) {
  CsvTable t = read_csv(path);
  if (!skip.empty()) {
    std::size_t kept = 0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      if (skip.count(t.rows[r][0]) != 0) continue;
      if (kept != r) {
        t.rows[kept] = std::move(t.rows[r]);
        t.lines[kept] = t.lines[r];
      }
      ++kept;
    }
    t.rows.resize(kept);
    t.lines.resize(kept);
  }
  require_columns(t, {"site_id", "time", "y", "e"});
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < locations.size(); ++k) index[locations[k].site_id] = k;

  ObservationPanel panel;
  panel.covariate_names.push_back("intercept");
  for (std::size_t c = 4; c < t.header.size(); ++c) {
    if (t.header[c] == "intercept") throw InputError(t.source + ": the intercept is added automatically");
    panel.covariate_names.push_back(t.header[c]);
  }
  const std::size_t p = panel.covariate_names.size();

  std::size_t N = 0;
  std::vector<std::size_t> site_of(t.rows.size());
  std::vector<std::size_t> time_of(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto it = index.find(row[0]);
    if (it == index.end()) throw InputError(at_line(t, r) + ": unknown site_id '" + row[0] + "'");
    site_of[r] = it->second;
    time_of[r] = parse_index(row[1], at_line(t, r), "time");
    if (time_of[r] == 0) throw InputError(at_line(t, r) + ": time must be at least 1");
    N = std::max(N, time_of[r]);
  }
  const std::size_t K = locations.size();
  if (K == 0 || N == 0) throw InputError(t.source + ": no observations");

  for (const auto& l : locations) panel.site_ids.push_back(l.site_id);
  panel.y = Field(K, N);
  panel.e = Field(K, N);
  panel.x.assign(K * N * p, 1.0);
  std::vector<std::size_t> seen(K * N, 0);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::size_t k = site_of[r];
    const std::size_t tt = time_of[r] - 1;
    const std::string where = at_line(t, r);
    if (seen[k * N + tt] != 0) {
      throw InputError(where + ": duplicate cell (site '" + row[0] + "', time " + row[1] +
                       "), first seen on line " + std::to_string(seen[k * N + tt]));
    }
    seen[k * N + tt] = t.lines[r];
    const double y = parse_at(row[2], where, "y");
    if (!(y >= 0.0) || std::floor(y) != y) {
      throw InputError(where + ": y must be a nonnegative integer, got '" + row[2] + "'");
    }
    const double e = parse_at(row[3], where, "e");
    if (!(e > 0.0) || !std::isfinite(e)) {
      throw InputError(where + ": e must be positive (site '" + row[0] + "', time " + row[1] + ")");
    }
    panel.y(k, tt) = y;
    panel.e(k, tt) = e;
    for (std::size_t i = 1; i < p; ++i) {
      const double v = parse_at(row[3 + i], where, t.header[3 + i].c_str());
      if (!std::isfinite(v)) throw InputError(where + ": covariate '" + t.header[3 + i] + "' is not finite");
      panel.x[(k * N + tt) * p + i] = v;
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t tt = 0; tt < N; ++tt) {
      if (seen[k * N + tt] == 0) {
        throw InputError(t.source + ": missing cell (site '" + panel.site_ids[k] + "', time " +
                         std::to_string(tt + 1) + ")");
      }
    }
  }
  standardise_covariates(panel);
  panel.validate();
  return panel;
}

void write_panel(const fs::path& path, const ObservationPanel& panel) {
  auto out = open_out(path);
  out << "site_id,time,y,e";
  for (std::size_t i = 1; i < panel.covariates(); ++i) out << ',' << panel.covariate_names[i];
  out << '\n';
  for (std::size_t k = 0; k < panel.sites(); ++k) {
    for (std::size_t t = 0; t < panel.times(); ++t) {
      out << panel.site_ids[k] << ',' << t + 1 << ',' << format_double(panel.y(k, t)) << ','
          << format_double(panel.e(k, t));
      for (std::size_t i = 1; i < panel.covariates(); ++i) out << ',' << format_double(panel.covariate(k, t, i));
      out << '\n';
    }
  }
}

LoadedData load_panel(const fs::path& observations, const fs::path& locations) {
  LoadedData d;
  d.locations = read_locations(locations);
  d.panel = read_observations(observations, d.locations);
  return d;
}

ListSizeTable read_list_sizes(const fs::path& list_sizes, const fs::path& rates) {
  const CsvTable rt = read_csv(rates);
  require_columns(rt, {"group", "rate"});
  ListSizeTable table;
  std::unordered_map<std::string, std::size_t> group_index;
  for (std::size_t r = 0; r < rt.rows.size(); ++r) {
    const auto& g = rt.rows[r][0];
    if (!group_index.emplace(g, table.groups.size()).second) {
      throw InputError(at_line(rt, r) + ": duplicate group '" + g + "'");
    }
    table.groups.push_back(g);
    table.rates.push_back(parse_at(rt.rows[r][1], at_line(rt, r), "rate"));
  }

  const CsvTable lt = read_csv(list_sizes);
  require_columns(lt, {"site_id", "group", "count"});
  std::unordered_map<std::string, std::size_t> site_index;
  std::vector<std::vector<double>> counts;
  for (std::size_t r = 0; r < lt.rows.size(); ++r) {
    const auto& row = lt.rows[r];
    auto [it, fresh] = site_index.emplace(row[0], table.site_ids.size());
    if (fresh) {
      table.site_ids.push_back(row[0]);
      counts.emplace_back(table.groups.size(), 0.0);
    }
    const auto g = group_index.find(row[1]);
    if (g == group_index.end()) throw InputError(at_line(lt, r) + ": unknown group '" + row[1] + "'");
    counts[it->second][g->second] += parse_at(row[2], at_line(lt, r), "count");
  }
  for (const auto& c : counts) table.counts.insert(table.counts.end(), c.begin(), c.end());
  table.validate();
  return table;
}

void write_weights(const fs::path& path, const SparseWeights& weights) {
  auto out = open_out(path);
  out << "row,col,weight\n";
  for (const auto& t : weights.triplets()) {
    out << t.row + 1 << ',' << t.col + 1 << ',' << format_double(t.weight) << '\n';
  }
}

void write_truth(const fs::path& dir, const SimulationTruth& truth,
                 const std::vector<std::string>& site_ids) {
  const auto& c = truth.config;
  FlatConfig rec;
  rec.set("K", std::to_string(c.K));
  rec.set("N", std::to_string(c.N));
  rec.set("m", std::to_string(c.m));
  std::vector<std::string> beta;
  for (double b : c.beta) beta.push_back(format_double(b));
  rec.set("beta", join(beta));
  rec.set("gamma", format_double(c.gamma));
  rec.set("tau2", format_double(c.tau2));
  rec.set("scheme", std::string(to_string(c.scheme)));
  rec.set("alpha", format_double(c.alpha));
  rec.set("target_taper_corr", format_double(c.target_taper_corr));
  rec.set("side", format_double(c.side > 0.0 ? c.side : std::sqrt(double(c.K))));
  rec.set("boundary_gap", format_double(c.boundary_gap));
  rec.set("boundary_step", format_double(c.boundary_step));
  rec.set("e_lo", format_double(c.e_lo));
  rec.set("e_hi", format_double(c.e_hi));
  rec.set("time_varying_e", c.time_varying_e ? "true" : "false");
  rec.set("zero_theta", c.zero_theta ? "true" : "false");
  rec.set("seed", std::to_string(c.seed));
  rec.save(dir / "truth.txt");

  auto phi = open_out(dir / "truth_phi.csv");
  phi << "site_id,time,theta,phi\n";
  for (std::size_t k = 0; k < truth.phi.sites(); ++k) {
    for (std::size_t t = 0; t < truth.phi.times(); ++t) {
      phi << site_ids[k] << ',' << t + 1 << ',' << format_double(truth.theta(k, t)) << ','
          << format_double(truth.phi(k, t)) << '\n';
    }
  }
  auto psi = open_out(dir / "truth_psi.csv");
  psi << "site_id,rank,psi,cluster\n";
  for (std::size_t k = 0; k < truth.psi.sites(); ++k) {
    const auto row = truth.psi.psi(k);
    for (std::size_t r = 0; r < row.size(); ++r) {
      psi << site_ids[k] << ',' << r + 1 << ',' << format_double(row[r]) << ',' << truth.cluster[k] << '\n';
    }
  }
}

void write_samples(const fs::path& dir, const PosteriorSamples& samples,
                   const std::vector<std::string>& site_ids, const FlatConfig& extra) {
  const bool global = samples.scheme == WeightScheme::global;
  const std::size_t p = samples.beta_names.size();
  const std::size_t K = samples.sites;
  const std::size_t N = samples.times;
  const std::size_t w = samples.width;
  if (site_ids.size() != K) throw InputError("site ids do not match the samples");

  FlatConfig meta = extra;
  meta.set("model", std::string(to_string(samples.scheme)));
  meta.set("sites", std::to_string(K));
  meta.set("times", std::to_string(N));
  meta.set("width", std::to_string(w));
  meta.set("n_chains", std::to_string(samples.chains.size()));
  meta.set("beta_names", join(samples.beta_names));
  std::vector<std::string> draws;
  for (const auto& c : samples.chains) draws.push_back(std::to_string(c.draws()));
  meta.set("draws_per_chain", join(draws));
  meta.save(dir / "samples.txt");

  for (std::size_t c = 0; c < samples.chains.size(); ++c) {
    const auto& ch = samples.chains[c];
    auto out = open_out(dir / ("samples_chain" + std::to_string(c + 1) + ".csv"));
    out << "iteration";
    for (const auto& n : samples.beta_names) out << ",beta_" << n;
    out << ",gamma,tau2" << (global ? ",alpha" : "") << '\n';
    for (std::size_t s = 0; s < ch.draws(); ++s) {
      out << ch.iteration[s];
      for (std::size_t i = 0; i < p; ++i) out << ',' << format_double(ch.beta[s * p + i]);
      out << ',' << format_double(ch.gamma[s]) << ',' << format_double(ch.tau2[s]);
      if (global) out << ',' << format_double(ch.alpha[s]);
      out << '\n';
    }
    if (!global && !ch.psi.empty()) {
      auto ps = open_out(dir / ("psi_draws_chain" + std::to_string(c + 1) + ".csv"));
      ps << "iteration";
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t r = 0; r < w; ++r) ps << ',' << site_ids[k] << ':' << r + 1;
      }
      ps << '\n';
      for (std::size_t s = 0; s < ch.draws(); ++s) {
        ps << ch.iteration[s];
        for (std::size_t i = 0; i < K * w; ++i) ps << ',' << format_double(ch.psi[s * K * w + i]);
        ps << '\n';
      }
    }
    if (!ch.phi.empty()) {
      auto ph = open_out(dir / ("phi_draws_chain" + std::to_string(c + 1) + ".csv"));
      ph << "iteration";
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t t = 0; t < N; ++t) ph << ',' << cell_label(site_ids[k], t);
      }
      ph << '\n';
      for (std::size_t s = 0; s < ch.phi_iteration.size(); ++s) {
        ph << ch.phi_iteration[s];
        for (std::size_t i = 0; i < K * N; ++i) ph << ',' << format_double(ch.phi[s * K * N + i]);
        ph << '\n';
      }
    }
  }

  {
    auto out = open_out(dir / "loglik.csv");
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t t = 0; t < N; ++t) out << (k + t == 0 ? "" : ",") << cell_label(site_ids[k], t);
    }
    out << '\n';
    for (const auto& ch : samples.chains) {
      for (std::size_t s = 0; s < ch.draws(); ++s) {
        for (std::size_t i = 0; i < K * N; ++i) {
          out << (i == 0 ? "" : ",") << format_double(ch.loglik[s * K * N + i]);
        }
        out << '\n';
      }
    }
  }

  // Pooled means weight each chain by its draw count.
  const double total = double(samples.total_draws());
  {
    auto out = open_out(dir / "phi_mean.csv");
    out << "site_id,time,phi_mean\n";
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t t = 0; t < N; ++t) {
        double m = 0.0;
        for (const auto& ch : samples.chains) m += ch.phi_mean(k, t) * double(ch.draws());
        out << site_ids[k] << ',' << t + 1 << ',' << format_double(m / total) << '\n';
      }
    }
  }
  if (!global) {
    auto out = open_out(dir / "psi_mean.csv");
    out << "site_id,rank,psi_mean\n";
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t r = 0; r < w; ++r) {
        double m = 0.0;
        for (const auto& ch : samples.chains) m += ch.psi_mean[k * w + r] * double(ch.draws());
        out << site_ids[k] << ',' << r + 1 << ',' << format_double(m / total) << '\n';
      }
    }
  }
}

StoredSamples read_samples(const fs::path& dir) {
  StoredSamples out;
  out.meta = FlatConfig::load(dir / "samples.txt");
  auto& s = out.samples;
  s.scheme = parse_scheme(out.meta.get_string("model"));
  s.sites = std::size_t(out.meta.get_int("sites"));
  s.times = std::size_t(out.meta.get_int("times"));
  s.width = std::size_t(out.meta.get_int("width"));
  s.beta_names = out.meta.get_strings("beta_names");
  const auto n_chains = std::size_t(out.meta.get_int("n_chains"));
  const bool global = s.scheme == WeightScheme::global;
  const std::size_t p = s.beta_names.size();
  const std::size_t K = s.sites;
  const std::size_t N = s.times;
  const std::size_t w = s.width;

  s.chains.resize(n_chains);
  for (std::size_t c = 0; c < n_chains; ++c) {
    auto& ch = s.chains[c];
    const CsvTable t = read_csv(dir / ("samples_chain" + std::to_string(c + 1) + ".csv"));
    if (t.header.size() != 1 + p + 2 + (global ? 1 : 0)) {
      throw InputError(t.source + ": unexpected column count");
    }
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const auto& row = t.rows[r];
      const std::string where = at_line(t, r);
      ch.iteration.push_back(parse_index(row[0], where, "iteration"));
      for (std::size_t i = 0; i < p; ++i) ch.beta.push_back(parse_at(row[1 + i], where, "beta"));
      ch.gamma.push_back(parse_at(row[1 + p], where, "gamma"));
      ch.tau2.push_back(parse_at(row[2 + p], where, "tau2"));
      if (global) ch.alpha.push_back(parse_at(row[3 + p], where, "alpha"));
    }
    const fs::path psi_path = dir / ("psi_draws_chain" + std::to_string(c + 1) + ".csv");
    if (!global && fs::exists(psi_path)) {
      const CsvTable pt = read_csv(psi_path);
      if (pt.header.size() != 1 + K * w) throw InputError(pt.source + ": unexpected column count");
      for (std::size_t r = 0; r < pt.rows.size(); ++r) {
        for (std::size_t i = 0; i < K * w; ++i) {
          ch.psi.push_back(parse_at(pt.rows[r][1 + i], at_line(pt, r), "psi"));
        }
      }
    }
  }

  const CsvTable lt = read_csv(dir / "loglik.csv");
  if (lt.header.size() != K * N) throw InputError(lt.source + ": expected one column per cell");
  if (lt.rows.size() != s.total_draws()) {
    throw InputError(lt.source + ": row count does not match the stored draws");
  }
  std::size_t row = 0;
  for (auto& ch : s.chains) {
    ch.loglik.reserve(ch.draws() * K * N);
    for (std::size_t d = 0; d < ch.draws(); ++d, ++row) {
      for (std::size_t i = 0; i < K * N; ++i) {
        ch.loglik.push_back(parse_at(lt.rows[row][i], at_line(lt, row), "log-likelihood"));
      }
    }
  }
  out.site_ids.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& label = lt.header[k * N];
    out.site_ids.push_back(label.substr(0, label.rfind(':')));
  }
  return out;
}

}  // namespace convospat
