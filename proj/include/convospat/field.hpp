#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace convospat {

/// Random engine used throughout; per-chain engines are derived from a
/// master seed (see mcmc.hpp).
using Rng = std::mt19937_64;

/// Dense sites x times array of doubles, stored site-major so the time
/// series of one site is contiguous.
class Field {
 public:
  Field() = default;
  Field(std::size_t sites, std::size_t times, double fill = 0.0)
      : sites_(sites), times_(times), values_(sites * times, fill) {}

  std::size_t sites() const { return sites_; }
  std::size_t times() const { return times_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(std::size_t k, std::size_t t) { return values_[k * times_ + t]; }
  double operator()(std::size_t k, std::size_t t) const { return values_[k * times_ + t]; }

  std::span<double> site(std::size_t k) { return {values_.data() + k * times_, times_}; }
  std::span<const double> site(std::size_t k) const {
    return {values_.data() + k * times_, times_};
  }

  std::vector<double>& values() & { return values_; }
  const std::vector<double>& values() const& { return values_; }
  // By value on temporaries, so `for (double v : f().values())` is safe.
  std::vector<double> values() && { return std::move(values_); }

  bool same_shape(const Field& other) const {
    return sites_ == other.sites_ && times_ == other.times_;
  }

  friend bool operator==(const Field&, const Field&) = default;

 private:
  std::size_t sites_ = 0;
  std::size_t times_ = 0;
  std::vector<double> values_;
};

}  // namespace convospat
