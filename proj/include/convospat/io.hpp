#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "convospat/config.hpp"
#include "convospat/mcmc.hpp"
#include "convospat/model_core.hpp"
#include "convospat/spatial_frame.hpp"
#include "convospat/standardization.hpp"
#include "convospat/weights.hpp"

namespace convospat {

/// Shortest text that parses back to the same double.
std::string format_double(double v);
/// Whole-string parse; throws InputError otherwise.
double parse_double(std::string_view s);

/// A comma-separated file without quoting. Rows keep their 1-based line
/// numbers for error messages.
struct CsvTable {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;

  /// Column index of `name`, or InputError when absent.
  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

/// `site_id,easting,northing`; row order defines the site index.
std::vector<Location> read_locations(const std::filesystem::path& path);
void write_locations(const std::filesystem::path& path, const std::vector<Location>& locations);

/// `site_id,time,y,e,<covariates...>` with times 1..N and every
/// (site, time) cell exactly once. Sites follow the order of `locations`.
/// An intercept column is prepended and the covariates are standardised.
/// Rows whose site is in `skip` are ignored.
ObservationPanel read_observations(const std::filesystem::path& path,
                                   const std::vector<Location>& locations,
                                   const std::set<std::string>& skip = {});
void write_panel(const std::filesystem::path& path, const ObservationPanel& panel);

struct LoadedData {
  ObservationPanel panel;
  std::vector<Location> locations;
};

LoadedData load_panel(const std::filesystem::path& observations,
                      const std::filesystem::path& locations);

/// `site_id,group,count` plus `group,rate`. Groups are ordered as in the
/// rates file; a site missing a group has count 0 for it.
ListSizeTable read_list_sizes(const std::filesystem::path& list_sizes,
                              const std::filesystem::path& rates);

/// `row,col,weight` with 1-based indices, in triplet order.
void write_weights(const std::filesystem::path& path, const SparseWeights& weights);

/// truth.txt (key-value), truth_phi.csv and truth_psi.csv.
void write_truth(const std::filesystem::path& dir, const SimulationTruth& truth,
                 const std::vector<std::string>& site_ids);

/// Writes samples_chain<c>.csv, loglik.csv, phi_mean.csv, and for the
/// adaptive scheme psi_mean.csv and psi_draws_chain<c>.csv, plus
/// samples.txt describing the layout (merged with `extra`).
void write_samples(const std::filesystem::path& dir, const PosteriorSamples& samples,
                   const std::vector<std::string>& site_ids, const FlatConfig& extra = {});

struct StoredSamples {
  PosteriorSamples samples;
  FlatConfig meta;
  std::vector<std::string> site_ids;
};

/// Reads back what write_samples produced (diagnostics are not stored).
StoredSamples read_samples(const std::filesystem::path& dir);

}  // namespace convospat
