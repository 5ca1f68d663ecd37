#include "convospat/spatial_frame.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "convospat/error.hpp"

namespace convospat {

namespace {

void require_finite(const Location& loc) {
  if (!std::isfinite(loc.easting) || !std::isfinite(loc.northing)) {
    throw InputError("site '" + loc.site_id + "' has a non-finite coordinate");
  }
}

double squared_distance(const Location& a, const Location& b) {
  const double de = a.easting - b.easting;
  const double dn = a.northing - b.northing;
  return de * de + dn * dn;
}

// Orders candidate sites for row k: squared distance first, index second.
struct NearerThan {
  const std::vector<double>* sq;
  bool operator()(std::size_t a, std::size_t b) const {
    const double da = (*sq)[a];
    const double db = (*sq)[b];
    return da < db || (da == db && a < b);
  }
};

}  // namespace

double euclidean_distance(const Location& a, const Location& b) {
  require_finite(a);
  require_finite(b);
  return std::sqrt(squared_distance(a, b));
}

SpatialFrame SpatialFrame::build(std::vector<Location> locations, std::size_t m) {
  if (locations.empty()) throw InputError("a spatial frame needs at least one site");
  if (m == 0) throw InputError("taper size m must be at least 1");

  std::unordered_set<std::string> seen;
  for (const auto& loc : locations) {
    require_finite(loc);
    if (!seen.insert(loc.site_id).second) {
      throw InputError("duplicate site_id '" + loc.site_id + "'");
    }
  }

  SpatialFrame frame;
  const std::size_t K = locations.size();
  frame.requested_m_ = m;
  frame.width_ = std::min(m, K);
  if (m > K) {
    frame.warnings_.push_back("taper size m=" + std::to_string(m) + " exceeds the " +
                              std::to_string(K) + " sites; clamped to " + std::to_string(K));
  }
  const std::size_t w = frame.width_;
  frame.taper_.resize(K * w);
  frame.distances_.resize(K * w);

  std::vector<double> sq(K);
  std::vector<std::size_t> order(K);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t j = 0; j < K; ++j) sq[j] = squared_distance(locations[k], locations[j]);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(w), order.end(),
                      NearerThan{&sq});
    for (std::size_t r = 0; r < w; ++r) {
      frame.taper_[k * w + r] = order[r];
      frame.distances_[k * w + r] = std::sqrt(sq[order[r]]);
    }
  }

  // Reverse relation in CSR form; rows are visited in ascending order so
  // each bucket comes out sorted.
  frame.reverse_offsets_.assign(K + 1, 0);
  for (std::size_t j : frame.taper_) ++frame.reverse_offsets_[j + 1];
  std::partial_sum(frame.reverse_offsets_.begin(), frame.reverse_offsets_.end(),
                   frame.reverse_offsets_.begin());
  frame.reverse_.resize(frame.taper_.size());
  std::vector<std::size_t> fill(frame.reverse_offsets_.begin(), frame.reverse_offsets_.end() - 1);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t r = 0; r < w; ++r) {
      const std::size_t j = frame.taper_[k * w + r];
      frame.reverse_[fill[j]++] = TaperMember{k, r};
    }
  }

  frame.locations_ = std::move(locations);
  return frame;
}

std::size_t SpatialFrame::rank_of(std::size_t k, std::size_t j) const {
  const auto set = taper_set(k);
  const auto it = std::find(set.begin(), set.end(), j);
  return static_cast<std::size_t>(it - set.begin());
}

std::vector<std::vector<std::size_t>> brute_force_taper_sets(
    const std::vector<Location>& locations, std::size_t m) {
  const std::size_t K = locations.size();
  const std::size_t w = std::min(m, K);
  std::vector<std::vector<std::size_t>> sets(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<std::pair<double, std::size_t>> all;
    all.reserve(K);
    for (std::size_t j = 0; j < K; ++j) {
      all.emplace_back(squared_distance(locations[k], locations[j]), j);
    }
    std::sort(all.begin(), all.end());
    for (std::size_t r = 0; r < w; ++r) sets[k].push_back(all[r].second);
  }
  return sets;
}

}  // namespace convospat
