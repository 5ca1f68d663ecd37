#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace convospat {

/// A fixed site with planar (projected) coordinates.
struct Location {
  std::string site_id;
  double easting = 0.0;
  double northing = 0.0;
};

/// Straight-line distance between two sites. Throws InputError on
/// non-finite coordinates.
double euclidean_distance(const Location& a, const Location& b);

/// One entry of the reverse taper relation: row `row` of the weight
/// matrix has column j at position `rank` of its taper set.
struct TaperMember {
  std::size_t row;
  std::size_t rank;
};

/// Site coordinates plus, for every site k, the ordered indices of its
/// m nearest sites (self included). Entries within a taper set are sorted
/// by ascending distance, ties broken by ascending site index.
///
/// Immutable once built; share it freely between chains.
class SpatialFrame {
 public:
  /// Builds the taper sets. A requested m larger than the number of sites
  /// is clamped and noted in warnings(). Throws InputError on an empty
  /// location list, m == 0, duplicate site ids or non-finite coordinates.
  static SpatialFrame build(std::vector<Location> locations, std::size_t m);

  std::size_t size() const { return locations_.size(); }
  /// Requested taper size before clamping.
  std::size_t requested_m() const { return requested_m_; }
  /// Entries per taper set, min(m, K).
  std::size_t width() const { return width_; }

  const std::vector<Location>& locations() const { return locations_; }
  const Location& location(std::size_t k) const { return locations_[k]; }

  std::span<const std::size_t> taper_set(std::size_t k) const {
    return {taper_.data() + k * width_, width_};
  }
  std::span<const double> taper_distances(std::size_t k) const {
    return {distances_.data() + k * width_, width_};
  }
  /// Rows whose taper set contains site j, in ascending row order.
  std::span<const TaperMember> rows_containing(std::size_t j) const {
    return {reverse_.data() + reverse_offsets_[j],
            reverse_offsets_[j + 1] - reverse_offsets_[j]};
  }

  /// Index of site j inside taper_set(k), or width() when absent.
  std::size_t rank_of(std::size_t k, std::size_t j) const;

  double distance(std::size_t i, std::size_t j) const {
    return euclidean_distance(locations_[i], locations_[j]);
  }

  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::vector<Location> locations_;
  std::size_t requested_m_ = 0;
  std::size_t width_ = 0;
  std::vector<std::size_t> taper_;
  std::vector<double> distances_;
  std::vector<TaperMember> reverse_;
  std::vector<std::size_t> reverse_offsets_;
  std::vector<std::string> warnings_;
};

/// Reference neighbour search: full O(K^2 log K) sort of every row. Used
/// to check the partial-sort path in SpatialFrame::build. Returns K rows
/// of min(m, K) indices.
std::vector<std::vector<std::size_t>> brute_force_taper_sets(
    const std::vector<Location>& locations, std::size_t m);

}  // namespace convospat
