#include <cmath>
#include <limits>
#include <random>

#include "convospat/error.hpp"
#include "convospat/field.hpp"
#include "convospat/spatial_frame.hpp"
#include "doctest.h"

using namespace convospat;

namespace {

std::vector<Location> line(std::initializer_list<double> xs) {
  std::vector<Location> out;
  int i = 0;
  for (double x : xs) out.push_back({"s" + std::to_string(++i), x, 0.0});
  return out;
}

std::vector<Location> random_sites(std::size_t K, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<Location> out;
  for (std::size_t k = 0; k < K; ++k) out.push_back({"s" + std::to_string(k), u(rng), u(rng)});
  return out;
}

}  // namespace

TEST_CASE("euclidean distance") {
  const Location a{"a", 1.0, 2.0};
  CHECK(euclidean_distance(a, a) == 0.0);
  CHECK(euclidean_distance({"o", 0, 0}, {"b", 3, 4}) == doctest::Approx(5.0));
  CHECK(euclidean_distance(a, {"b", 4, 6}) == doctest::Approx(5.0));
  CHECK_THROWS_AS(euclidean_distance(a, {"c", std::nan(""), 0}), InputError);
}

TEST_CASE("taper of one is the site itself") {
  Rng rng(4);
  const auto frame = SpatialFrame::build(random_sites(30, rng), 1);
  for (std::size_t k = 0; k < frame.size(); ++k) {
    REQUIRE(frame.taper_set(k).size() == 1);
    CHECK(frame.taper_set(k)[0] == k);
  }
}

TEST_CASE("points on a line") {
  const auto frame = SpatialFrame::build(line({0, 1, 2, 3, 10}), 2);
  const auto set = frame.taper_set(3);
  CHECK(set[0] == 3);
  CHECK(set[1] == 2);
  CHECK(frame.taper_distances(3)[1] == 1.0);
}

TEST_CASE("coincident points tie-break by index") {
  const auto frame = SpatialFrame::build({{"a", 1, 1}, {"b", 1, 1}, {"c", 5, 5}}, 2);
  CHECK(frame.taper_set(0)[0] == 0);
  CHECK(frame.taper_set(0)[1] == 1);
  CHECK(frame.taper_set(1)[0] == 0);
  CHECK(frame.taper_set(1)[1] == 1);
}

TEST_CASE("m larger than K is clamped with a warning") {
  const auto frame = SpatialFrame::build(line({0, 1, 2}), 8);
  CHECK(frame.width() == 3);
  CHECK(frame.requested_m() == 8);
  CHECK(frame.warnings().size() == 1);
}

TEST_CASE("invalid frames") {
  CHECK_THROWS_AS(SpatialFrame::build({}, 2), InputError);
  CHECK_THROWS_AS(SpatialFrame::build(line({0, 1}), 0), InputError);
  CHECK_THROWS_AS(SpatialFrame::build({{"a", 0, 0}, {"a", 1, 0}}, 1), InputError);
  CHECK_THROWS_AS(SpatialFrame::build({{"a", 0, 0}, {"b", std::numeric_limits<double>::infinity(), 0}}, 1),
                  InputError);
}

TEST_CASE("partial sort matches brute force") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t K = 5 + rep * 7;
    const std::size_t m = 1 + rep % 9;
    const auto sites = random_sites(K, rng);
    const auto frame = SpatialFrame::build(sites, m);
    const auto brute = brute_force_taper_sets(sites, m);
    for (std::size_t k = 0; k < K; ++k) {
      const auto set = frame.taper_set(k);
      CHECK(std::vector<std::size_t>(set.begin(), set.end()) == brute[k]);
    }
  }
}

TEST_CASE("reverse index is the transpose of the taper relation") {
  Rng rng(12);
  const auto frame = SpatialFrame::build(random_sites(60, rng), 6);
  std::size_t total = 0;
  for (std::size_t j = 0; j < frame.size(); ++j) {
    std::size_t prev_row = 0;
    bool first = true;
    for (const auto& mem : frame.rows_containing(j)) {
      CHECK(frame.taper_set(mem.row)[mem.rank] == j);
      if (!first) CHECK(mem.row > prev_row);
      prev_row = mem.row;
      first = false;
      ++total;
    }
    for (std::size_t k = 0; k < frame.size(); ++k) {
      const bool member = frame.rank_of(k, j) < frame.width();
      bool listed = false;
      for (const auto& mem : frame.rows_containing(j)) listed = listed || mem.row == k;
      CHECK(member == listed);
    }
  }
  CHECK(total == frame.size() * frame.width());
}
