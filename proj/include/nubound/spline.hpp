#pragma once

// Penalized cubic regression spline with natural boundary conditions and a
// second-derivative roughness penalty. Interior knots sit at quantiles of
// the distinct predictor values; the smoothing parameter is chosen by
// leave-one-out cross-validation through the hat-matrix shortcut.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nubound/error.hpp"

namespace nubound {

struct SplineConfig {
  int knot_count = 10;
  /// Number of log-spaced candidates between the df_min and df_max fits.
  int grid_size = 41;
  double df_min = 2.5;
  /// Upper end of the grid as a fraction of N (capped below the basis size).
  double df_max_fraction = 0.5;
  /// Explicit candidates; overrides the df-derived grid when non-empty.
  std::vector<double> lambda_grid;
};

namespace detail {

inline constexpr int kDegree = 3;

/// Clamped cubic knot vector: four copies of each boundary around the interior knots.
inline std::vector<double> clamped_knots(double lo, double hi, std::span<const double> interior) {
  std::vector<double> t;
  t.reserve(interior.size() + 8);
  t.insert(t.end(), 4, lo);
  t.insert(t.end(), interior.begin(), interior.end());
  t.insert(t.end(), 4, hi);
  return t;
}

/// Knot span i with t[i] <= u < t[i+1]; the right boundary maps to the last span.
inline int find_span(const std::vector<double>& t, double u) {
  const int nbasis = static_cast<int>(t.size()) - 4;
  if (u >= t[nbasis]) return nbasis - 1;
  if (u <= t[kDegree]) return kDegree;
  const auto it = std::upper_bound(t.begin() + kDegree, t.begin() + nbasis + 1, u);
  return static_cast<int>(it - t.begin()) - 1;
}

/// Values and first two derivatives of the four cubic B-splines that are
/// nonzero on span i (basis indices i-3..i). Row r holds the r-th derivative.
using BasisDers = std::array<std::array<double, 4>, 3>;

inline BasisDers basis_ders(const std::vector<double>& t, int span, double u) {
  constexpr int p = kDegree;
  double ndu[p + 1][p + 1];
  double left[p + 1], right[p + 1];
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = u - t[span + 1 - j];
    right[j] = t[span + j] - u;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }
  BasisDers ders{};
  for (int j = 0; j <= p; ++j) ders[0][j] = ndu[j][p];
  double a[2][p + 1];
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a[0][0] = 1.0;
    for (int k = 1; k <= 2; ++k) {
      double d = 0.0;
      const int rk = r - k, pk = p - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        d += a[s2][k] * ndu[r][pk];
      }
      ders[k][r] = d;
      std::swap(s1, s2);
    }
  }
  ders[1] = {ders[1][0] * 3, ders[1][1] * 3, ders[1][2] * 3, ders[1][3] * 3};
  ders[2] = {ders[2][0] * 6, ders[2][1] * 6, ders[2][2] * 6, ders[2][3] * 6};
  return ders;
}

/// Type-7 quantiles at i/(K+1), i = 1..K, of sorted distinct values.
inline std::vector<double> quantile_knots(std::span<const double> sorted_unique, int knot_count) {
  std::vector<double> knots(static_cast<std::size_t>(knot_count));
  const double last = static_cast<double>(sorted_unique.size() - 1);
  for (int i = 1; i <= knot_count; ++i) {
    const double pos = last * static_cast<double>(i) / static_cast<double>(knot_count + 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    const double v = lo + 1 < sorted_unique.size()
                         ? sorted_unique[lo] + frac * (sorted_unique[lo + 1] - sorted_unique[lo])
                         : sorted_unique[lo];
    knots[static_cast<std::size_t>(i - 1)] = v;
  }
  return knots;
}

/// Drops interior knots closer than a fraction of the range to a kept knot
/// or to either boundary. Near-coincident knots make the roughness penalty
/// too ill-conditioned to factor.
inline constexpr double kMinKnotGap = 1e-3;

inline std::vector<double> thin_knots(std::span<const double> interior, double lo, double hi) {
  const double gap = kMinKnotGap * (hi - lo);
  std::vector<double> kept;
  double prev = lo;
  for (double k : interior) {
    if (k - prev >= gap && hi - k >= gap) {
      kept.push_back(k);
      prev = k;
    }
  }
  return kept;
}

}  // namespace detail

/// Normal equations of the penalized fit in the natural-spline basis, built
/// once per dataset and solved for any smoothing parameter.
class PenalizedSplineSystem {
 public:
  PenalizedSplineSystem(std::span<const double> z, std::span<const double> y, int knot_count) {
    if (z.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "z and y differ in length");
    if (knot_count < 1) throw Error(ErrorCode::InvalidArgument, "knot_count must be positive");
    collapse_ties(z, y);
    if (static_cast<int>(unique_z_.size()) < std::max(knot_count, 2)) {
      throw Error(ErrorCode::RankDeficient, "too few distinct predictor values for the knot count");
    }
    const double lo = unique_z_.front(), hi = unique_z_.back();
    knots_ = detail::clamped_knots(lo, hi, detail::thin_knots(detail::quantile_knots(unique_z_, knot_count), lo, hi));
    build();
  }

  int basis_size() const { return static_cast<int>(null_space_.cols()); }
  std::size_t unique_count() const { return unique_z_.size(); }
  std::size_t sample_size() const { return n_; }
  double lambda_scale() const { return gram_.trace() / penalty_.trace(); }

  struct Solution {
    Eigen::VectorXd theta;
    Eigen::VectorXd fitted_unique;
  };

  Solution solve(double lambda) const {
    const auto ldlt = factor(lambda);
    Solution s;
    s.theta = ldlt.solve(rhs_);
    s.fitted_unique = design_ * s.theta;
    return s;
  }

  /// Effective degrees of freedom tr(S_λ).
  double hat_trace(double lambda) const {
    const auto ldlt = factor(lambda);
    return ldlt.solve(gram_).trace();
  }

  /// Leave-one-out CV score Σ w (ȳ − f)² / (1 − S_ii)² / Σ w.
  double cv_score(double lambda) const {
    const auto ldlt = factor(lambda);
    const Eigen::VectorXd fitted = design_ * ldlt.solve(rhs_);
    const Eigen::MatrixXd solved = ldlt.solve(design_.transpose());
    double num = 0.0;
    for (Eigen::Index j = 0; j < design_.rows(); ++j) {
      const double leverage = weight_[j] * design_.row(j).dot(solved.col(j));
      const double r = (ybar_[j] - fitted[j]) / std::max(1.0 - leverage, 1e-12);
      num += weight_[j] * r * r;
    }
    return num / static_cast<double>(n_);
  }

  /// Smoother matrix on the distinct predictor values (weights applied on the right).
  Eigen::MatrixXd hat_matrix(double lambda) const {
    const auto ldlt = factor(lambda);
    Eigen::MatrixXd s = design_ * ldlt.solve(design_.transpose());
    for (Eigen::Index j = 0; j < s.cols(); ++j) s.col(j) *= weight_[j];
    return s;
  }

  /// λ whose fit has the requested degrees of freedom (bisection in log λ).
  double lambda_for_df(double df) const {
    const double scale = lambda_scale();
    double lo = -14.0, hi = 14.0;  // log10(λ / scale); df decreases in λ
    for (int i = 0; i < 80; ++i) {
      const double mid = 0.5 * (lo + hi);
      (hat_trace(scale * std::pow(10.0, mid)) > df ? lo : hi) = mid;
    }
    return scale * std::pow(10.0, 0.5 * (lo + hi));
  }

  /// Sample variance (denominator N − 1) of the fitted values at the original points.
  double fitted_variance(const Eigen::VectorXd& fitted_unique) const {
    double mean = 0.0;
    for (Eigen::Index j = 0; j < fitted_unique.size(); ++j) mean += weight_[j] * fitted_unique[j];
    mean /= static_cast<double>(n_);
    double ss = 0.0;
    for (Eigen::Index j = 0; j < fitted_unique.size(); ++j) {
      const double d = fitted_unique[j] - mean;
      ss += weight_[j] * d * d;
    }
    return ss / static_cast<double>(n_ - 1);
  }

  /// Σ (y_i − f(z_i))² over the original observations.
  double residual_ss(const Eigen::VectorXd& fitted_unique) const {
    double ss = within_ss_;
    for (Eigen::Index j = 0; j < fitted_unique.size(); ++j) {
      const double d = ybar_[static_cast<std::size_t>(j)] - fitted_unique[j];
      ss += weight_[static_cast<std::size_t>(j)] * d * d;
    }
    return ss;
  }

  /// Sample variance (denominator N − 1) of the response.
  double response_variance() const {
    double mean = 0.0;
    for (std::size_t j = 0; j < ybar_.size(); ++j) mean += weight_[j] * ybar_[j];
    mean /= static_cast<double>(n_);
    double ss = within_ss_;
    for (std::size_t j = 0; j < ybar_.size(); ++j) ss += weight_[j] * (ybar_[j] - mean) * (ybar_[j] - mean);
    return ss / static_cast<double>(n_ - 1);
  }

  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& unique_z() const { return unique_z_; }
  const std::vector<std::size_t>& unique_index() const { return unique_index_; }
  const Eigen::MatrixXd& null_space() const { return null_space_; }

 private:
  // Pivoted LDLT: large λ leaves the linear directions poorly scaled
  // against the penalty, which plain Cholesky does not tolerate.
  Eigen::LDLT<Eigen::MatrixXd> factor(double lambda) const {
    if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be non-negative");
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram_ + lambda * penalty_);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0)) throw Error(ErrorCode::RankDeficient, "penalized normal equations are singular");
    return ldlt;
  }

  void collapse_ties(std::span<const double> z, std::span<const double> y) {
    n_ = z.size();
    std::vector<std::size_t> order(n_);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return z[a] < z[b]; });
    unique_index_.assign(n_, 0);
    for (std::size_t i : order) {
      if (!std::isfinite(z[i]) || !std::isfinite(y[i])) throw Error(ErrorCode::InvalidArgument, "non-finite data");
      if (unique_z_.empty() || z[i] != unique_z_.back()) {
        unique_z_.push_back(z[i]);
        weight_.push_back(0.0);
        ybar_.push_back(0.0);
      }
      weight_.back() += 1.0;
      ybar_.back() += y[i];
      unique_index_[i] = unique_z_.size() - 1;
    }
    for (std::size_t j = 0; j < ybar_.size(); ++j) ybar_[j] /= weight_[j];
    within_ss_ = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double d = y[i] - ybar_[unique_index_[i]];
      within_ss_ += d * d;
    }
  }

  void build() {
    const int nfull = static_cast<int>(knots_.size()) - 4;
    // Natural boundary conditions: f'' = 0 at both ends.
    Eigen::MatrixXd constraint_t = Eigen::MatrixXd::Zero(nfull, 2);
    {
      const double lo = knots_.front(), hi = knots_.back();
      const int s0 = detail::find_span(knots_, lo);
      const auto d0 = detail::basis_ders(knots_, s0, lo);
      for (int m = 0; m < 4; ++m) constraint_t(s0 - 3 + m, 0) = d0[2][m];
      const int s1 = detail::find_span(knots_, hi);
      const auto d1 = detail::basis_ders(knots_, s1, hi);
      for (int m = 0; m < 4; ++m) constraint_t(s1 - 3 + m, 1) = d1[2][m];
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(constraint_t);
    const Eigen::MatrixXd q = qr.householderQ();
    null_space_ = q.rightCols(nfull - 2);

    // Roughness penalty: B'' is linear on each span, so two-point Gauss is exact.
    Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(nfull, nfull);
    const double g = 0.5 / std::sqrt(3.0);
    for (int span = 3; span < nfull; ++span) {
      const double a = knots_[span], b = knots_[span + 1];
      const double h = b - a;
      if (!(h > 0.0)) continue;
      for (double offset : {-g, g}) {
        const double u = 0.5 * (a + b) + offset * h;
        const auto d = detail::basis_ders(knots_, span, u);
        for (int r = 0; r < 4; ++r) {
          for (int c = 0; c < 4; ++c) omega(span - 3 + r, span - 3 + c) += 0.5 * h * d[2][r] * d[2][c];
        }
      }
    }
    penalty_ = null_space_.transpose() * omega * null_space_;

    const auto nu = static_cast<Eigen::Index>(unique_z_.size());
    design_.resize(nu, null_space_.cols());
    for (Eigen::Index j = 0; j < nu; ++j) {
      const double u = unique_z_[static_cast<std::size_t>(j)];
      const int span = detail::find_span(knots_, u);
      const auto d = detail::basis_ders(knots_, span, u);
      design_.row(j) = d[0][0] * null_space_.row(span - 3) + d[0][1] * null_space_.row(span - 2) +
                       d[0][2] * null_space_.row(span - 1) + d[0][3] * null_space_.row(span);
    }
    const Eigen::Map<const Eigen::VectorXd> w(weight_.data(), nu);
    const Eigen::Map<const Eigen::VectorXd> yb(ybar_.data(), nu);
    gram_ = design_.transpose() * w.asDiagonal() * design_;
    rhs_ = design_.transpose() * (w.cwiseProduct(yb));
  }

  std::size_t n_ = 0;
  std::vector<double> unique_z_;
  std::vector<double> weight_;
  std::vector<double> ybar_;
  double within_ss_ = 0.0;
  std::vector<std::size_t> unique_index_;
  std::vector<double> knots_;
  Eigen::MatrixXd null_space_;
  Eigen::MatrixXd penalty_;
  Eigen::MatrixXd design_;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd rhs_;
};

/// A fitted natural cubic smoothing spline; immutable once built.
struct SplineFit {
  std::vector<double> knots;  // full clamped knot vector
  std::vector<double> coefficients;  // B-spline coefficients
  double lambda = 0.0;
  double hat_trace = 0.0;
  double cv_score = std::numeric_limits<double>::quiet_NaN();
  double z_min = 0.0;
  double z_max = 0.0;
  std::vector<double> fitted;  // at the training points, original order

  std::vector<double> interior_knots() const { return {knots.begin() + 4, knots.end() - 4}; }

  double predict(double z) const {
    if (z < z_min) return value_and_slope(z_min).first + value_and_slope(z_min).second * (z - z_min);
    if (z > z_max) return value_and_slope(z_max).first + value_and_slope(z_max).second * (z - z_max);
    return value_and_slope(z).first;
  }

  std::vector<double> predict(std::span<const double> z) const {
    std::vector<double> out(z.size());
    std::transform(z.begin(), z.end(), out.begin(), [this](double v) { return predict(v); });
    return out;
  }

  void dump(std::ostream& os) const {
    os.precision(17);
    os << "lambda " << lambda << "\nhat_trace " << hat_trace << "\ncv_score " << cv_score << "\nrange " << z_min
       << ' ' << z_max << "\nknots";
    for (double k : knots) os << ' ' << k;
    os << "\ncoefficients";
    for (double c : coefficients) os << ' ' << c;
    os << '\n';
  }

 private:
  std::pair<double, double> value_and_slope(double z) const {
    const int span = detail::find_span(knots, z);
    const auto d = detail::basis_ders(knots, span, z);
    double v = 0.0, s = 0.0;
    for (int m = 0; m < 4; ++m) {
      v += coefficients[static_cast<std::size_t>(span - 3 + m)] * d[0][m];
      s += coefficients[static_cast<std::size_t>(span - 3 + m)] * d[1][m];
    }
    return {v, s};
  }
};

namespace spline {

inline SplineFit assemble(const PenalizedSplineSystem& sys, double lambda) {
  const auto sol = sys.solve(lambda);
  SplineFit fit;
  fit.knots = sys.knots();
  const Eigen::VectorXd coef = sys.null_space() * sol.theta;
  fit.coefficients.assign(coef.data(), coef.data() + coef.size());
  fit.lambda = lambda;
  fit.hat_trace = sys.hat_trace(lambda);
  fit.z_min = sys.unique_z().front();
  fit.z_max = sys.unique_z().back();
  fit.fitted.resize(sys.sample_size());
  for (std::size_t i = 0; i < fit.fitted.size(); ++i) fit.fitted[i] = sol.fitted_unique[sys.unique_index()[i]];
  return fit;
}

/// Candidate smoothing parameters for a dataset, largest df first.
inline std::vector<double> lambda_grid(const PenalizedSplineSystem& sys, const SplineConfig& cfg) {
  if (!cfg.lambda_grid.empty()) return cfg.lambda_grid;
  if (cfg.grid_size < 1) throw Error(ErrorCode::EmptyGrid, "lambda grid is empty");
  const double df_cap = std::min(static_cast<double>(sys.basis_size()), static_cast<double>(sys.unique_count())) - 0.5;
  const double df_hi = std::max(std::min(cfg.df_max_fraction * static_cast<double>(sys.sample_size()), df_cap),
                                cfg.df_min);
  const double lam_lo = std::log(sys.lambda_for_df(df_hi));
  const double lam_hi = std::log(sys.lambda_for_df(cfg.df_min));
  std::vector<double> grid(static_cast<std::size_t>(cfg.grid_size));
  for (int i = 0; i < cfg.grid_size; ++i) {
    const double f = cfg.grid_size == 1 ? 0.0 : static_cast<double>(i) / (cfg.grid_size - 1);
    grid[static_cast<std::size_t>(i)] = std::exp(lam_lo + f * (lam_hi - lam_lo));
  }
  return grid;
}

struct CvPath {
  std::vector<double> lambdas;
  std::vector<double> scores;
  std::size_t best = 0;
};

inline CvPath cv_path(const PenalizedSplineSystem& sys, const SplineConfig& cfg) {
  CvPath path;
  path.lambdas = lambda_grid(sys, cfg);
  if (path.lambdas.empty()) throw Error(ErrorCode::EmptyGrid, "lambda grid is empty");
  path.scores.reserve(path.lambdas.size());
  for (double lam : path.lambdas) path.scores.push_back(sys.cv_score(lam));
  path.best = static_cast<std::size_t>(std::min_element(path.scores.begin(), path.scores.end()) - path.scores.begin());
  return path;
}

/// Fit with the smoothing parameter chosen by leave-one-out CV.
inline SplineFit fit(std::span<const double> z, std::span<const double> y, const SplineConfig& cfg = {}) {
  if (z.size() < static_cast<std::size_t>(cfg.knot_count) + 4) {
    throw Error(ErrorCode::TooFewPoints, "need at least knot_count + 4 observations");
  }
  const PenalizedSplineSystem sys(z, y, cfg.knot_count);
  const CvPath path = cv_path(sys, cfg);
  SplineFit f = assemble(sys, path.lambdas[path.best]);
  f.cv_score = path.scores[path.best];
  return f;
}

/// Fit at a given smoothing parameter.
inline SplineFit fit_fixed(std::span<const double> z, std::span<const double> y, int knot_count, double lambda) {
  const PenalizedSplineSystem sys(z, y, knot_count);
  return assemble(sys, lambda);
}

}  // namespace spline
}  // namespace nubound
