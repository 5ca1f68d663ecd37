#include <cmath>
#include <string>

#include "convospat/error.hpp"
#include "convospat/mcmc.hpp"

namespace convospat {

namespace {

struct SegmentMoments {
  double mean = 0.0;
  double var_of_mean = 0.0;
};

// Mean of the segment and the batch-means estimate of its variance.
// Trailing draws that do not fill a batch are dropped from both.
SegmentMoments batch_moments(std::span<const double> x) {
  const std::size_t batches = static_cast<std::size_t>(std::floor(std::sqrt(double(x.size()))));
  const std::size_t len = x.size() / batches;
  const std::size_t used = batches * len;

  std::vector<double> means(batches, 0.0);
  double total = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t i = 0; i < len; ++i) means[b] += x[b * len + i];
    total += means[b];
    means[b] /= double(len);
  }
  SegmentMoments m;
  m.mean = total / double(used);
  double ss = 0.0;
  for (double v : means) ss += (v - m.mean) * (v - m.mean);
  // Long-run variance len * s^2_batch, divided by the segment length.
  const double long_run = double(len) * ss / double(batches - 1);
  m.var_of_mean = long_run / double(used);
  return m;
}

}  // namespace

std::optional<double> geweke(std::span<const double> chain, double first, double last) {
  if (chain.size() < 100) {
    throw InputError("Geweke diagnostic needs at least 100 draws, got " + std::to_string(chain.size()));
  }
  if (!(first > 0.0 && last > 0.0 && first + last < 1.0)) {
    throw InputError("Geweke segment fractions must be positive and sum below 1");
  }
  const std::size_t n = chain.size();
  const std::size_t n_a = static_cast<std::size_t>(std::floor(first * double(n)));
  const std::size_t n_b = static_cast<std::size_t>(std::floor(last * double(n)));
  const auto a = batch_moments(chain.first(n_a));
  const auto b = batch_moments(chain.last(n_b));
  const double denom = a.var_of_mean + b.var_of_mean;
  if (!(denom > 0.0)) return std::nullopt;
  return (a.mean - b.mean) / std::sqrt(denom);
}

}  // namespace convospat
