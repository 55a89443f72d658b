#pragma once

// k-nearest-neighbour mutual information estimator, second (rectangle)
// variant, for scalar X and Z under the max-norm.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "nubound/error.hpp"
#include "nubound/rng.hpp"
#include "nubound/special.hpp"

namespace nubound {

struct KnnConfig {
  int k = 3;
  /// Standard deviation of independent Gaussian jitter added to both
  /// coordinates before estimation; zero disables it.
  double jitter_scale = 0.0;
  std::uint64_t jitter_seed = 0;
};

namespace detail {

inline void check_no_duplicates(std::span<const double> x, std::span<const double> z) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] != x[b] ? x[a] < x[b] : z[a] < z[b];
  });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (x[order[i]] == x[order[i - 1]] && z[order[i]] == z[order[i - 1]]) {
      throw Error(ErrorCode::DuplicatePoints, "duplicate joint points; set a jitter scale");
    }
  }
}

}  // namespace detail

/// Estimate of I(X;Z) in nats. The value may be negative and is returned raw.
inline double knn_mutual_information(std::span<const double> x_in, std::span<const double> z_in,
                                     const KnnConfig& cfg = {}) {
  if (x_in.size() != z_in.size()) throw Error(ErrorCode::InvalidArgument, "x and z differ in length");
  if (cfg.k < 1) throw Error(ErrorCode::InvalidArgument, "k must be positive");
  const std::size_t n = x_in.size();
  const auto k = static_cast<std::size_t>(cfg.k);
  if (n < k + 1) throw Error(ErrorCode::TooFewPoints, "need at least k + 1 points");

  std::vector<double> x(x_in.begin(), x_in.end());
  std::vector<double> z(z_in.begin(), z_in.end());
  if (cfg.jitter_scale > 0.0) {
    Rng rng(cfg.jitter_seed);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += rng.normal(0.0, cfg.jitter_scale);
      z[i] += rng.normal(0.0, cfg.jitter_scale);
    }
  } else {
    detail::check_no_duplicates(x, z);
  }

  struct Neighbor {
    double dist;
    std::size_t index;
    bool operator<(const Neighbor& o) const { return dist != o.dist ? dist < o.dist : index < o.index; }
  };
  std::vector<Neighbor> nb;
  nb.reserve(n - 1);
  std::vector<double> terms(n);
  for (std::size_t i = 0; i < n; ++i) {
    nb.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      nb.push_back({std::max(std::fabs(x[j] - x[i]), std::fabs(z[j] - z[i])), j});
    }
    std::nth_element(nb.begin(), nb.begin() + static_cast<std::ptrdiff_t>(k - 1), nb.end());
    // Half edge lengths of the smallest rectangle holding the k neighbours.
    double ex = 0.0, ez = 0.0;
    for (std::size_t m = 0; m < k; ++m) {
      ex = std::max(ex, std::fabs(x[nb[m].index] - x[i]));
      ez = std::max(ez, std::fabs(z[nb[m].index] - z[i]));
    }
    std::size_t nx = 0, nz = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (std::fabs(x[j] - x[i]) <= ex) ++nx;
      if (std::fabs(z[j] - z[i]) <= ez) ++nz;
    }
    terms[i] = digamma(static_cast<double>(nx)) + digamma(static_cast<double>(nz));
  }
  // Sorted accumulation makes the result independent of row order.
  std::sort(terms.begin(), terms.end());
  double sum = 0.0;
  for (double t : terms) sum += t;
  const double kd = static_cast<double>(k);
  return digamma(kd) - 1.0 / kd - sum / static_cast<double>(n) + digamma(static_cast<double>(n));
}

}  // namespace nubound
