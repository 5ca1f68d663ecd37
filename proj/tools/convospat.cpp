#include <iostream>
#include <map>
#include <string>
#include <utility>

#include "CLI11.hpp"
#include "convospat/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal process-convolution models for counts"};
  app.require_subcommand(1);
  std::string config_file;
  std::string model;
  std::string out;
  long long m = 0;
  long long seed = -1;

  const std::pair<const char*, const char*> commands[] = {
      {"simulate", "draw a synthetic dataset with its generating truth"},
      {"fit", "run the MCMC chains and write the samples"},
      {"assess", "WAIC, LMPL and coefficient summaries from stored samples"},
      {"correlations", "posterior spatial correlation against distance"},
      {"summarize", "coefficient summaries only"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_file, "flat key=value config file");
    sub->add_option("--model", model, "global or adaptive");
    sub->add_option("--m", m, "taper size")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "random seed")->check(CLI::NonNegativeNumber);
    sub->add_option("--out", out, "output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return convospat::exit_code_for("usage");
  }

  try {
    std::map<std::string, std::string> overrides;
    if (!model.empty()) overrides["model"] = model;
    if (m > 0) overrides["m"] = std::to_string(m);
    if (seed >= 0) overrides["seed"] = std::to_string(seed);
    if (!out.empty()) overrides["out"] = out;
    const auto config = convospat::RunConfig::make(app.get_subcommands().front()->get_name(), config_file, overrides);
    convospat::run_command(config, std::cout);
  } catch (const std::exception& e) {
    const std::string category = convospat::error_category(e);
    std::string msg = e.what();
    for (char& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::cerr << "error: " << category << ": " << msg << '\n';
    return convospat::exit_code_for(category);
  }
  return 0;
}
