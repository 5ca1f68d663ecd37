#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "convospat/field.hpp"
#include "convospat/model_core.hpp"
#include "convospat/spatial_frame.hpp"
#include "convospat/weights.hpp"

namespace convospat {

/// Registered patients per site and age-sex group, plus the national
/// disease rate of each group (cases per person).
struct ListSizeTable {
  std::vector<std::string> site_ids;
  std::vector<std::string> groups;
  std::vector<double> counts;  // site-major, sites x groups
  std::vector<double> rates;   // one per group

  double count(std::size_t k, std::size_t g) const { return counts[k * groups.size() + g]; }
  void validate() const;
};

/// The 16 default group labels: two sexes by eight age bands, 0-4 to 85+.
std::vector<std::string> default_age_sex_groups();

struct ExpectedCounts {
  std::vector<double> expected;  // one per site
  std::vector<bool> excluded;    // sites whose expected count is 0
  std::vector<std::string> warnings;
};

/// Indirect standardisation: E_k = sum_g listsize_kg * rate_g. Sites with
/// E_k = 0 are flagged for exclusion rather than rejected.
ExpectedCounts expected_counts(const ListSizeTable& table);

/// Rescales E so its total over all cells matches the total count.
/// Throws InputError when either total is not positive.
Field scale_expected(const Field& e_raw, const Field& y);

/// Standardised rate Y / E per cell.
Field spr(const Field& y, const Field& e);

enum class TruthScheme { global, adaptive, boundary, independent };

std::string_view to_string(TruthScheme scheme);
TruthScheme parse_truth_scheme(std::string_view name);

struct SimulationConfig {
  std::size_t K = 100;
  std::size_t N = 10;
  std::size_t m = 8;
  /// Intercept first; one standard-normal covariate per further entry.
  std::vector<double> beta{0.2, 0.5, -0.3};
  double gamma = 0.7;
  double tau2 = 0.1;
  TruthScheme scheme = TruthScheme::global;
  /// Kernel bandwidth for the global and boundary truths.
  double alpha = 1.0;
  /// When positive, alpha is replaced by the bandwidth giving this median
  /// taper correlation on the simulated frame.
  double target_taper_corr = 0.0;
  /// Side of the square study region; 0 means sqrt(K), about one site per unit area.
  double side = 0.0;
  /// Boundary scenario: empty strip between the clusters and a constant
  /// log-rate offset added to the eastern cluster.
  double boundary_gap = 0.0;
  double boundary_step = 0.0;
  double e_lo = 50.0;
  double e_hi = 250.0;
  /// Draw E per cell instead of once per site.
  bool time_varying_e = false;
  /// Force theta = 0 (no latent field).
  bool zero_theta = false;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Every generating quantity behind a simulated dataset.
struct SimulationTruth {
  SimulationConfig config;
  SparseWeights weights;
  AdaptiveWeightState psi;  // the per-site weights, whatever the scheme
  Field theta;
  /// Spatial random effect entering the log rate (W theta plus any
  /// boundary offset).
  Field phi;
  /// Cluster label per site (0 west, 1 east); all 0 outside the boundary scenario.
  std::vector<int> cluster;
};

struct SimulatedDataset {
  ObservationPanel panel;
  std::vector<Location> locations;
  SpatialFrame frame;
  SimulationTruth truth;
};

/// Synthetic counts with known truth. Sites are uniform on a square (two
/// side-by-side clusters in the boundary scenario); covariates are
/// standard normal rescaled to unit sample SD, so loading them back leaves
/// them unchanged. A pure function of the config, seed included.
SimulatedDataset simulate_dataset(const SimulationConfig& config);

}  // namespace convospat
