#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <string>

#include "convospat/config.hpp"
#include "convospat/error.hpp"

namespace convospat {

/// Bad command name, model name or flag value.
class UsageError : public InputError {
 public:
  using InputError::InputError;
};

/// Settings for one command: the config file merged with command-line
/// overrides. Relative paths in the file resolve against its directory;
/// overrides resolve against the working directory.
struct RunConfig {
  std::string command;
  FlatConfig settings;
  std::filesystem::path config_dir = ".";
  std::set<std::string> overridden;

  /// Throws UsageError for unknown commands or keys.
  static RunConfig make(const std::string& command, const std::filesystem::path& config_file,
                        const std::map<std::string, std::string>& overrides);

  std::filesystem::path path(const std::string& key, const std::string& fallback) const;
  std::filesystem::path out_dir() const;
};

/// Every key any command accepts, so one file can drive a whole pipeline.
const std::set<std::string>& known_config_keys();

/// observations.csv, locations.csv, weights.csv and the truth record.
void cmd_simulate(const RunConfig& config, std::ostream& log);
/// Samples, a copy of the locations, diagnostics.txt and timing.txt.
void cmd_fit(const RunConfig& config, std::ostream& log);
/// report.txt (waic, p_w, lmpl, lppd) and summaries.csv.
void cmd_assess(const RunConfig& config, std::ostream& log);
/// correlations.csv: posterior median spatial correlation per overlapping pair.
void cmd_correlations(const RunConfig& config, std::ostream& log);
/// summaries.csv only.
void cmd_summarize(const RunConfig& config, std::ostream& log);

void run_command(const RunConfig& config, std::ostream& log);

/// Short machine-readable label for an exception type: usage, input, io,
/// numerical or internal.
std::string error_category(const std::exception& e);
int exit_code_for(const std::string& category);

}  // namespace convospat
