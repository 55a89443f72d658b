#pragma once

// Gaussianizing maps s(x) = Φ⁻¹(F_X(x)) with a known or empirical F_X.

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "nubound/error.hpp"
#include "nubound/special.hpp"

namespace nubound {

/// Probabilities are clipped to this distance from 0 and 1 before Φ⁻¹.
inline constexpr double kProbClip = 1e-15;

/// A continuous univariate law given by its CDF and survival function.
/// The survival function is kept separately so upper-tail probabilities
/// do not lose precision to 1 − F.
struct UnivariateLaw {
  std::string name;
  std::function<double(double)> cdf;
  std::function<double(double)> sf;
  double support_lo = -HUGE_VAL;
  double support_hi = HUGE_VAL;
  double median = 0.0;
};

inline UnivariateLaw normal_law(double mean, double variance) {
  detail::require(variance > 0.0, ErrorCode::InvalidArgument, "normal variance must be positive");
  const double sd = std::sqrt(variance);
  UnivariateLaw law;
  law.name = "normal";
  law.cdf = [=](double x) { return normal_cdf((x - mean) / sd); };
  law.sf = [=](double x) { return normal_sf((x - mean) / sd); };
  law.median = mean;
  return law;
}

/// Equal-weight two-component normal mixture.
inline UnivariateLaw mixture_law(double mu1, double var1, double mu2, double var2) {
  detail::require(var1 > 0.0 && var2 > 0.0, ErrorCode::InvalidArgument, "mixture variances must be positive");
  const double s1 = std::sqrt(var1), s2 = std::sqrt(var2);
  UnivariateLaw law;
  law.name = "mixture";
  law.cdf = [=](double x) { return 0.5 * (normal_cdf((x - mu1) / s1) + normal_cdf((x - mu2) / s2)); };
  law.sf = [=](double x) { return 0.5 * (normal_sf((x - mu1) / s1) + normal_sf((x - mu2) / s2)); };
  // Bisection for the median; the CDF is strictly increasing.
  double lo = std::min(mu1, mu2), hi = std::max(mu1, mu2);
  for (int i = 0; i < 200 && hi - lo > 1e-14 * (1.0 + std::fabs(lo)); ++i) {
    const double mid = 0.5 * (lo + hi);
    (law.cdf(mid) < 0.5 ? lo : hi) = mid;
  }
  law.median = 0.5 * (lo + hi);
  return law;
}

enum class MapKind { KnownCdf, EmpiricalRank };
enum class TiePolicy { AverageThenJitter, Error };

/// Gaussianizing map X → X̃.
///
/// KnownCdf evaluates Φ⁻¹(F_X(x)) pointwise. EmpiricalRank replaces F_X by
/// Blom plotting positions (rank − 3/8)/(N + 1/4) of the sample being mapped,
/// so it is outside the known-input setting the bounds assume.
class GaussianizingMap {
 public:
  static GaussianizingMap known(UnivariateLaw law) {
    GaussianizingMap m;
    m.kind_ = MapKind::KnownCdf;
    m.law_ = std::move(law);
    return m;
  }

  static GaussianizingMap empirical(TiePolicy ties = TiePolicy::AverageThenJitter) {
    GaussianizingMap m;
    m.kind_ = MapKind::EmpiricalRank;
    m.ties_ = ties;
    return m;
  }

  MapKind kind() const { return kind_; }
  const UnivariateLaw& law() const { return law_; }

  /// Pointwise forward map; KnownCdf only.
  double forward(double x) const {
    detail::require(kind_ == MapKind::KnownCdf, ErrorCode::InvalidArgument, "pointwise map needs a known CDF");
    if (!(x > law_.support_lo && x < law_.support_hi)) throw Error(ErrorCode::SupportViolation, "x outside support");
    if (x <= law_.median) {
      const double p = law_.cdf(x);
      if (!(p > 0.0)) throw Error(ErrorCode::SupportViolation, "F_X(x) = 0");
      return normal_quantile(std::clamp(p, kProbClip, 1.0 - kProbClip));
    }
    const double q = law_.sf(x);
    if (!(q > 0.0)) throw Error(ErrorCode::SupportViolation, "F_X(x) = 1");
    return -normal_quantile(std::clamp(q, kProbClip, 1.0 - kProbClip));
  }

  /// Inverse of forward() by bracketed bisection on the known CDF.
  double inverse(double xt) const {
    detail::require(kind_ == MapKind::KnownCdf, ErrorCode::InvalidArgument, "inverse needs a known CDF");
    double lo = law_.median, hi = law_.median;
    double step = 1.0;
    while (forward_or_clip(lo) > xt) {
      lo -= step;
      step *= 2.0;
      if (!std::isfinite(lo) || step > 1e300) throw Error(ErrorCode::InversionFailure, "cannot bracket inverse");
    }
    step = 1.0;
    while (forward_or_clip(hi) < xt) {
      hi += step;
      step *= 2.0;
      if (!std::isfinite(hi) || step > 1e300) throw Error(ErrorCode::InversionFailure, "cannot bracket inverse");
    }
    for (int i = 0; i < 400 && hi - lo > 1e-13 * (1.0 + std::fabs(lo) + std::fabs(hi)); ++i) {
      const double mid = 0.5 * (lo + hi);
      (forward_or_clip(mid) < xt ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

  std::vector<double> gaussianize(std::span<const double> x) const {
    if (kind_ == MapKind::KnownCdf) {
      std::vector<double> out(x.size());
      std::transform(x.begin(), x.end(), out.begin(), [this](double v) { return forward(v); });
      return out;
    }
    return blom_scores(x);
  }

 private:
  double forward_or_clip(double x) const {
    const double p = x <= law_.median ? law_.cdf(x) : 1.0 - law_.sf(x);
    if (p <= 0.0) return -HUGE_VAL;
    if (p >= 1.0) return HUGE_VAL;
    return forward(x);
  }

  std::vector<double> blom_scores(std::span<const double> x) const {
    const std::size_t n = x.size();
    if (n < 3) throw Error(ErrorCode::TooFewPoints, "empirical map needs at least 3 points");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
      if (j > i && ties_ == TiePolicy::Error) throw Error(ErrorCode::TieError, "tied values in empirical map");
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      // Within a tie group the stable sort keeps index order.
      for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg + 1e-9 * static_cast<double>(t - i);
      i = j + 1;
    }
    std::vector<double> out(n);
    const double denom = static_cast<double>(n) + 0.25;
    for (std::size_t i = 0; i < n; ++i) out[i] = normal_quantile((rank[i] - 0.375) / denom);
    return out;
  }

  MapKind kind_ = MapKind::KnownCdf;
  TiePolicy ties_ = TiePolicy::AverageThenJitter;
  UnivariateLaw law_;
};

/// Frozen empirical map: the sorted reference sample with its Blom scores.
/// New values are mapped by linear interpolation, clamped at the ends.
struct EmpiricalTable {
  std::vector<double> x;
  std::vector<double> score;

  static EmpiricalTable fit(std::span<const double> reference, TiePolicy ties = TiePolicy::AverageThenJitter) {
    const auto scores = GaussianizingMap::empirical(ties).gaussianize(reference);
    std::vector<std::size_t> order(reference.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    EmpiricalTable t;
    for (std::size_t i : order) {
      t.x.push_back(reference[i]);
      t.score.push_back(scores[i]);
    }
    return t;
  }

  double operator()(double v) const {
    if (x.empty()) throw Error(ErrorCode::InvalidArgument, "empty table");
    if (v <= x.front()) return score.front();
    if (v >= x.back()) return score.back();
    const auto it = std::upper_bound(x.begin(), x.end(), v);
    const auto hi = static_cast<std::size_t>(it - x.begin());
    const std::size_t lo = hi - 1;
    if (x[hi] == x[lo]) return score[lo];
    const double w = (v - x[lo]) / (x[hi] - x[lo]);
    return score[lo] + w * (score[hi] - score[lo]);
  }

  void save(std::ostream& os) const {
    os << "# nubound empirical gaussianizing map\n" << x.size() << '\n';
    os.precision(17);
    for (std::size_t i = 0; i < x.size(); ++i) os << x[i] << ' ' << score[i] << '\n';
  }

  static EmpiricalTable load(std::istream& is) {
    std::string line;
    while (std::getline(is, line) && (line.empty() || line.front() == '#')) {
    }
    EmpiricalTable t;
    std::size_t n = 0;
    if (!(std::istringstream(line) >> n)) throw Error(ErrorCode::Io, "malformed empirical map header");
    t.x.resize(n);
    t.score.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!(is >> t.x[i] >> t.score[i])) throw Error(ErrorCode::Io, "truncated empirical map");
    }
    if (!std::is_sorted(t.x.begin(), t.x.end())) throw Error(ErrorCode::Io, "empirical map is not sorted");
    return t;
  }
};

}  // namespace nubound
