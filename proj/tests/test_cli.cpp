#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "convospat/commands.hpp"
#include "convospat/io.hpp"
#include "doctest.h"

using namespace convospat;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("convospat_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct Run {
  int status;
  std::string err;
};

Run cli(const std::string& args, const fs::path& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(CONVOSPAT_CLI_PATH) + " " + args + " > " + (dir / "stdout.txt").string() +
                          " 2> " + err.string();
  const int raw = std::system(cmd.c_str());
  std::ifstream in(err);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("simulate, fit, assess, correlations, summarize") {
  TempDir dir;
  write(dir.path / "run.cfg", "K=16\nN=3\nn_burnin=100\nn_keep=100\nthin=1\nn_chains=2\n"
                              "observations=sim/observations.csv\nlocations=sim/locations.csv\n");
  const std::string cfg = "--config " + (dir.path / "run.cfg").string();
  REQUIRE(cli("simulate " + cfg + " --out " + (dir.path / "sim").string(), dir.path).status == 0);
  for (const char* f : {"observations.csv", "locations.csv", "truth.txt", "truth_phi.csv", "weights.csv"}) {
    CHECK(fs::exists(dir.path / "sim" / f));
  }
  CHECK_NOTHROW(load_panel(dir.path / "sim/observations.csv", dir.path / "sim/locations.csv"));

  const fs::path fit = dir.path / "fit";
  REQUIRE(cli("fit " + cfg + " --model adaptive --m 4 --out " + fit.string(), dir.path).status == 0);
  CHECK(fs::exists(fit / "samples_chain1.csv"));
  CHECK(fs::exists(fit / "samples_chain2.csv"));
  CHECK_FALSE(fs::exists(fit / "samples_chain3.csv"));
  CHECK(FlatConfig::load(fit / "timing.txt").get_double("sampling_seconds") > 0.0);

  REQUIRE(cli("assess --out " + fit.string(), dir.path).status == 0);
  const auto report = FlatConfig::load(fit / "report.txt");
  CHECK(report.has("waic"));
  CHECK(report.has("p_w"));
  CHECK(report.has("lmpl"));

  REQUIRE(cli("summarize --out " + fit.string(), dir.path).status == 0);
  const auto summaries = slurp(fit / "summaries.csv");
  CHECK(summaries.substr(0, summaries.find('\n')) == "name,median,lo95,hi95,rr_median,rr_lo95,rr_hi95");

  REQUIRE(cli("correlations --out " + fit.string(), dir.path).status == 0);
  const auto corr = slurp(fit / "correlations.csv");
  CHECK(corr.substr(0, corr.find('\n')) == "site_k,site_i,distance,spatial_corr");
}

TEST_CASE("identity weights give only self pairs") {
  TempDir dir;
  write(dir.path / "run.cfg", "K=9\nN=2\nm=1\nn_burnin=50\nn_keep=50\nthin=1\nn_chains=1\n"
                              "observations=observations.csv\nlocations=locations.csv\nout=.\n");
  const auto rc = [&](const std::string& cmd) { return RunConfig::make(cmd, dir.path / "run.cfg", {}); };
  std::ostringstream log;
  cmd_simulate(rc("simulate"), log);
  cmd_fit(rc("fit"), log);
  cmd_correlations(rc("correlations"), log);
  std::ifstream in(dir.path / "correlations.csv");
  std::string line;
  std::getline(in, line);
  int rows = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string k, i, d, c;
    std::getline(ss, k, ',');
    std::getline(ss, i, ',');
    std::getline(ss, d, ',');
    std::getline(ss, c, ',');
    CHECK(k == i);
    CHECK(c == "1");
    ++rows;
  }
  CHECK(rows == 9);
}

TEST_CASE("assess on identical draws") {
  TempDir dir;
  PosteriorSamples s;
  s.beta_names = {"intercept"};
  s.sites = 1;
  s.times = 2;
  s.width = 1;
  ChainSamples ch;
  for (std::size_t d = 0; d < 4; ++d) {
    ch.iteration.push_back(d + 1);
    ch.beta.push_back(0.0);
    ch.gamma.push_back(0.5);
    ch.tau2.push_back(0.1);
    ch.alpha.push_back(1.0);
    ch.loglik.insert(ch.loglik.end(), {-1.25, -0.5});
  }
  ch.phi_mean = Field(1, 2);
  s.chains.push_back(ch);
  write_samples(dir.path, s, {"A"});
  std::ostringstream log;
  cmd_assess(RunConfig::make("assess", "", {{"out", dir.path.string()}}), log);
  const auto report = FlatConfig::load(dir.path / "report.txt");
  CHECK(report.get_double("p_w") == 0.0);
  CHECK(report.get_double("waic") == doctest::Approx(3.5));
  CHECK(report.get_double("lmpl") == doctest::Approx(-1.75));
}

TEST_CASE("errors are reported as one categorised line") {
  TempDir dir;
  auto r = cli("fit --model smooth --out " + dir.path.string(), dir.path);
  CHECK(r.status != 0);
  CHECK(r.err.rfind("error: usage:", 0) == 0);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);

  write(dir.path / "bad.cfg", "colour=blue\n");
  r = cli("simulate --config " + (dir.path / "bad.cfg").string(), dir.path);
  CHECK(r.status != 0);
  CHECK(r.err.rfind("error: usage:", 0) == 0);

  r = cli("assess --out " + (dir.path / "nothing").string(), dir.path);
  CHECK(r.status != 0);
  CHECK(r.err.rfind("error: io:", 0) == 0);

  r = cli("frobnicate", dir.path);
  CHECK(r.status != 0);

  write(dir.path / "obs.csv", "site_id,time,y,e\nA,1,3,0\n");
  write(dir.path / "loc.csv", "site_id,easting,northing\nA,0,0\n");
  write(dir.path / "fit.cfg", "observations=obs.csv\nlocations=loc.csv\n");
  r = cli("fit --config " + (dir.path / "fit.cfg").string() + " --out " + (dir.path / "o").string(), dir.path);
  CHECK(r.status != 0);
  CHECK(r.err.rfind("error: input:", 0) == 0);
  CHECK(r.err.find("line 2") != std::string::npos);
}

TEST_CASE("list sizes replace the expected counts") {
  TempDir dir;
  write(dir.path / "obs.csv", "site_id,time,y,e\nA,1,3,1\nA,2,5,1\nB,1,4,1\nB,2,8,1\nC,1,1,1\nC,2,1,1\n");
  write(dir.path / "loc.csv", "site_id,easting,northing\nA,0,0\nB,1,0\nC,2,0\n");
  write(dir.path / "rates.csv", "group,rate\nm,0.1\nf,0.2\n");
  write(dir.path / "sizes.csv", "site_id,group,count\nA,m,100\nA,f,50\nB,m,10\n");
  write(dir.path / "fit.cfg", "observations=obs.csv\nlocations=loc.csv\nlistsizes=sizes.csv\nrates=rates.csv\n"
                              "n_burnin=20\nn_keep=20\nthin=1\nn_chains=1\nm=2\nout=fit\n");
  std::ostringstream log;
  cmd_fit(RunConfig::make("fit", dir.path / "fit.cfg", {}), log);
  CHECK(log.str().find("site C") != std::string::npos);
  const auto stored = read_samples(dir.path / "fit");
  CHECK(stored.site_ids == std::vector<std::string>{"A", "B"});
}
