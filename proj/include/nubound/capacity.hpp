#pragma once

// Lower bounds on information capacity for channels described by their
// first two conditional moments. The pseudo-input M = m(X) is taken to be
// Gaussian; E{V[Z|X]} is estimated by Monte Carlo over X = m⁻¹(M).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nubound/bounds.hpp"
#include "nubound/error.hpp"
#include "nubound/rng.hpp"

namespace nubound {

/// E[Z|X=x], V[Z|X=x] and the open box on which they are defined.
struct ChannelMoments {
  std::string name;
  std::function<VectorXd(const VectorXd&)> mean_fn;
  std::function<MatrixXd(const VectorXd&)> cond_var_fn;
  VectorXd domain_lo;
  VectorXd domain_hi;
  /// m⁻¹; returns nothing when the point lies outside m(domain). Required
  /// when the input has more than one dimension.
  std::function<std::optional<VectorXd>(const VectorXd&)> inverse;

  Eigen::Index input_dim() const { return domain_lo.size(); }
};

struct GaussianPseudoInput {
  VectorXd mean;
  MatrixXd covariance;

  void validate() const {
    detail::check_symmetric(covariance, "pseudo-input covariance");
    if (mean.size() != covariance.rows()) throw Error(ErrorCode::InvalidArgument, "pseudo-input dimension mismatch");
    detail::log_det_spd(covariance, ErrorCode::NonPositiveDefinite, "pseudo-input covariance");
  }
};

struct CapacityEvaluation {
  BoundEstimate bound;
  double stderr_nats = 0.0;
  double escape_fraction = 0.0;
  std::size_t draws_used = 0;
};

namespace detail {

/// Interior point of (lo, hi) indexed by t ∈ (0, 1), increasing in t.
inline double interior_point(double lo, double hi, double t) {
  const bool flo = std::isfinite(lo), fhi = std::isfinite(hi);
  if (flo && fhi) return lo + t * (hi - lo);
  if (flo) return lo + t / (1.0 - t);
  if (fhi) return hi - (1.0 - t) / t;
  return std::tan(std::numbers::pi * (t - 0.5));
}

inline constexpr double kInversionTol = 1e-10;

/// Strictly monotone scalar mean function with bisection inversion.
class ScalarInverter {
 public:
  explicit ScalarInverter(const ChannelMoments& ch) : ch_(ch), lo_(ch.domain_lo[0]), hi_(ch.domain_hi[0]) {
    constexpr int kGrid = 201;
    std::vector<double> values(kGrid);
    for (int i = 0; i < kGrid; ++i) {
      const double t = (i + 1.0) / (kGrid + 1.0);
      values[static_cast<std::size_t>(i)] = eval(interior_point(lo_, hi_, t));
    }
    sign_ = values.back() > values.front() ? 1.0 : -1.0;
    for (std::size_t i = 1; i < values.size(); ++i) {
      if (!(sign_ * (values[i] - values[i - 1]) > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "mean function is not strictly monotone on the domain");
      }
    }
  }

  std::optional<double> operator()(double target) const {
    // Locate a finite bracket in the t parametrization first.
    double tl = 0.0, th = 1.0;
    for (int it = 0; it < 200 && (tl == 0.0 || th == 1.0); ++it) {
      const double t = 0.5 * (tl + th);
      const double x = interior_point(lo_, hi_, t);
      if (!(x > lo_ && x < hi_)) return std::nullopt;
      const double g = sign_ * (eval(x) - target);
      if (g < 0.0) tl = t;
      else if (g > 0.0) th = t;
      else return x;
    }
    if (tl == 0.0 || th == 1.0) return std::nullopt;
    double xl = interior_point(lo_, hi_, tl), xh = interior_point(lo_, hi_, th);
    for (int it = 0; it < 400 && xh - xl > kInversionTol * std::max(1.0, std::fabs(xl)); ++it) {
      const double x = 0.5 * (xl + xh);
      if (x <= xl || x >= xh) break;
      const double g = sign_ * (eval(x) - target);
      if (g < 0.0) xl = x;
      else if (g > 0.0) xh = x;
      else return x;
    }
    return 0.5 * (xl + xh);
  }

 private:
  double eval(double x) const {
    VectorXd v(1);
    v[0] = x;
    const VectorXd m = ch_.mean_fn(v);
    if (m.size() != 1 || !std::isfinite(m[0])) throw Error(ErrorCode::InversionFailure, "mean function is not finite");
    return m[0];
  }

  const ChannelMoments& ch_;
  double lo_, hi_;
  double sign_ = 1.0;
};

inline void check_channel(const ChannelMoments& ch) {
  if (!ch.mean_fn || !ch.cond_var_fn) throw Error(ErrorCode::InvalidArgument, "channel moment functions are missing");
  if (ch.domain_lo.size() == 0 || ch.domain_lo.size() != ch.domain_hi.size()) {
    throw Error(ErrorCode::InvalidArgument, "channel domain is malformed");
  }
  if (!(ch.domain_lo.array() < ch.domain_hi.array()).all()) {
    throw Error(ErrorCode::InvalidArgument, "channel domain is empty");
  }
  if (ch.input_dim() > 1 && !ch.inverse) {
    throw Error(ErrorCode::InvalidArgument, "multivariate channels need an explicit inverse");
  }
}

inline bool in_domain(const ChannelMoments& ch, const VectorXd& x) {
  return (x.array() > ch.domain_lo.array()).all() && (x.array() < ch.domain_hi.array()).all();
}

}  // namespace detail

inline constexpr double kMaxEscapeFraction = 1e-3;

/// Bound −½ log ν(Z|X) for a Gaussian pseudo-input, with a delta-method
/// standard error. The same seed gives the same draws for any pseudo-input.
inline CapacityEvaluation bound_at(const ChannelMoments& ch, const GaussianPseudoInput& pseudo,
                                   std::size_t mc_draws, std::uint64_t seed) {
  detail::check_channel(ch);
  pseudo.validate();
  if (mc_draws < 1000) throw Error(ErrorCode::InvalidArgument, "need at least 1000 draws");
  const Eigen::Index d = pseudo.mean.size();
  const MatrixXd chol = pseudo.covariance.llt().matrixL();

  std::optional<detail::ScalarInverter> scalar;
  if (!ch.inverse) scalar.emplace(ch);
  const auto invert = [&](const VectorXd& m) -> std::optional<VectorXd> {
    if (ch.inverse) return ch.inverse(m);
    if (m.size() != 1) throw Error(ErrorCode::InvalidArgument, "scalar channel needs a scalar pseudo-input");
    const auto x = (*scalar)(m[0]);
    if (!x) return std::nullopt;
    return VectorXd::Constant(1, *x);
  };

  Rng rng(seed);
  std::vector<MatrixXd> cond;
  cond.reserve(mc_draws);
  std::size_t escaped = 0;
  VectorXd u(d);
  for (std::size_t i = 0; i < mc_draws; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) u[j] = rng.normal();
    const VectorXd m = pseudo.mean + chol * u;
    const auto x = invert(m);
    if (!x || !detail::in_domain(ch, *x)) {
      ++escaped;
      continue;
    }
    MatrixXd v = ch.cond_var_fn(*x);
    if (v.rows() != d || v.cols() != d || !v.allFinite()) {
      throw Error(ErrorCode::InvalidArgument, "conditional variance has the wrong shape or is not finite");
    }
    cond.push_back(std::move(v));
  }
  CapacityEvaluation out;
  out.escape_fraction = static_cast<double>(escaped) / static_cast<double>(mc_draws);
  out.draws_used = cond.size();
  if (out.escape_fraction > kMaxEscapeFraction) {
    throw Error(ErrorCode::DomainEscape, "pseudo-input places too much mass outside the image of the domain");
  }

  MatrixXd expected = MatrixXd::Zero(d, d);
  for (const auto& v : cond) expected += v;
  expected /= static_cast<double>(cond.size());
  const MatrixXd total = pseudo.covariance + expected;
  out.bound = bound_from_nu(nu_from_moments(total, expected));

  // Gradient of ½ log det(Σ + C) − ½ log det C with respect to C.
  const MatrixXd grad = 0.5 * (total.inverse() - expected.inverse());
  double mean = 0.0, sq = 0.0;
  for (const auto& v : cond) {
    const double g = (grad.array() * v.array()).sum();
    mean += g;
    sq += g * g;
  }
  const auto n = static_cast<double>(cond.size());
  mean /= n;
  const double var = std::max(0.0, (sq - n * mean * mean) / (n - 1.0));
  out.stderr_nats = std::sqrt(var / n);
  return out;
}

/// Box over the pseudo-input parameters: mean coordinates, the log of the
/// Cholesky diagonal and the Cholesky off-diagonal entries.
struct PseudoInputBox {
  VectorXd mean_lo, mean_hi;
  VectorXd log_sd_lo, log_sd_hi;
  double offdiag_limit = 0.0;

  Eigen::Index dim() const { return mean_lo.size(); }
  Eigen::Index parameter_count() const { return 2 * dim() + dim() * (dim() - 1) / 2; }

  VectorXd lower() const {
    VectorXd v(parameter_count());
    v << mean_lo, log_sd_lo, VectorXd::Constant(parameter_count() - 2 * dim(), -offdiag_limit);
    return v;
  }
  VectorXd upper() const {
    VectorXd v(parameter_count());
    v << mean_hi, log_sd_hi, VectorXd::Constant(parameter_count() - 2 * dim(), offdiag_limit);
    return v;
  }

  void validate() const {
    const Eigen::Index d = dim();
    if (d == 0 || mean_hi.size() != d || log_sd_lo.size() != d || log_sd_hi.size() != d) {
      throw Error(ErrorCode::InvalidArgument, "search box dimensions disagree");
    }
    if (!(lower().array() <= upper().array()).all() || !lower().allFinite() || !upper().allFinite()) {
      throw Error(ErrorCode::InvalidArgument, "search box bounds are inverted or not finite");
    }
  }

  /// Scalar box with a cap on the pseudo-input variance.
  static PseudoInputBox scalar(double mean_lo, double mean_hi, double var_lo, double var_hi) {
    PseudoInputBox b;
    b.mean_lo = VectorXd::Constant(1, mean_lo);
    b.mean_hi = VectorXd::Constant(1, mean_hi);
    b.log_sd_lo = VectorXd::Constant(1, 0.5 * std::log(var_lo));
    b.log_sd_hi = VectorXd::Constant(1, 0.5 * std::log(var_hi));
    return b;
  }
};

inline GaussianPseudoInput pseudo_from_parameters(const VectorXd& theta, Eigen::Index d) {
  GaussianPseudoInput p;
  p.mean = theta.head(d);
  MatrixXd l = MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) l(i, i) = std::exp(theta[d + i]);
  Eigen::Index k = 2 * d;
  for (Eigen::Index i = 1; i < d; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) l(i, j) = theta[k++];
  }
  p.covariance = l * l.transpose();
  return p;
}

struct CapacityConfig {
  std::size_t mc_draws = 10000;
  std::uint64_t seed = 1;
  int max_evaluations = 2000;
  double ftol = 1e-10;
  double xtol = 1e-7;
};

struct CapacityResult {
  GaussianPseudoInput pseudo;
  CapacityEvaluation evaluation;
  VectorXd parameters;
  int evaluations = 0;
  bool budget_exhausted = false;
};

/// Nelder–Mead ascent of the bound over the box, with common random
/// numbers across evaluations. Infeasible points score −∞.
inline CapacityResult maximize_capacity_bound(const ChannelMoments& ch, const PseudoInputBox& box,
                                              const CapacityConfig& cfg = {}) {
  detail::check_channel(ch);
  box.validate();
  const Eigen::Index d = box.dim();
  const Eigen::Index np = box.parameter_count();
  const VectorXd lo = box.lower(), hi = box.upper();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  int evaluations = 0;
  const auto objective = [&](const VectorXd& theta) {
    ++evaluations;
    try {
      return bound_at(ch, pseudo_from_parameters(theta, d), cfg.mc_draws, cfg.seed).bound.nats;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::DomainEscape) return kNegInf;
      throw;
    }
  };
  const auto clamp = [&](VectorXd v) { return VectorXd(v.cwiseMax(lo).cwiseMin(hi)); };

  const VectorXd centre = 0.5 * (lo + hi);
  std::vector<VectorXd> simplex{centre};
  for (Eigen::Index i = 0; i < np; ++i) {
    VectorXd v = centre;
    const double step = 0.25 * (hi[i] - lo[i]);
    v[i] += step > 0.0 ? step : 0.05 * std::max(1.0, std::fabs(v[i]));
    simplex.push_back(clamp(v));
  }
  std::vector<double> f;
  for (const auto& v : simplex) f.push_back(objective(v));
  if (std::none_of(f.begin(), f.end(), [](double x) { return std::isfinite(x); })) {
    throw Error(ErrorCode::InfeasibleSearchBox, "no starting pseudo-input keeps its mass inside the channel image");
  }

  std::vector<std::size_t> order(simplex.size());
  bool converged = false;
  while (evaluations < cfg.max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return f[a] > f[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    double spread = 0.0, extent = 0.0;
    for (std::size_t i = 0; i < simplex.size(); ++i) {
      spread = std::max(spread, std::isfinite(f[i]) ? f[best] - f[i] : std::numeric_limits<double>::infinity());
      extent = std::max(extent, (simplex[i] - simplex[best]).cwiseAbs().maxCoeff());
    }
    if (spread <= cfg.ftol * (1.0 + std::fabs(f[best])) && extent <= cfg.xtol) {
      converged = true;
      break;
    }
    VectorXd centroid = VectorXd::Zero(np);
    for (std::size_t i : order) {
      if (i != worst) centroid += simplex[i];
    }
    centroid /= static_cast<double>(np);

    const VectorXd reflected = clamp(centroid + (centroid - simplex[worst]));
    const double fr = objective(reflected);
    if (fr > f[best]) {
      const VectorXd expanded = clamp(centroid + 2.0 * (centroid - simplex[worst]));
      const double fe = objective(expanded);
      if (fe > fr) {
        simplex[worst] = expanded;
        f[worst] = fe;
      } else {
        simplex[worst] = reflected;
        f[worst] = fr;
      }
      continue;
    }
    if (fr > f[second]) {
      simplex[worst] = reflected;
      f[worst] = fr;
      continue;
    }
    const bool outside = fr > f[worst];
    const VectorXd contracted =
        outside ? clamp(centroid + 0.5 * (reflected - centroid)) : clamp(centroid + 0.5 * (simplex[worst] - centroid));
    const double fc = objective(contracted);
    if (fc > (outside ? fr : f[worst])) {
      simplex[worst] = contracted;
      f[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < simplex.size(); ++i) {
      if (i == best) continue;
      simplex[i] = clamp(simplex[best] + 0.5 * (simplex[i] - simplex[best]));
      f[i] = objective(simplex[i]);
    }
  }

  const auto best_it = std::max_element(f.begin(), f.end());
  CapacityResult out;
  out.parameters = simplex[static_cast<std::size_t>(best_it - f.begin())];
  out.pseudo = pseudo_from_parameters(out.parameters, d);
  out.evaluation = bound_at(ch, out.pseudo, cfg.mc_draws, cfg.seed);
  out.evaluations = evaluations;
  out.budget_exhausted = !converged;
  return out;
}

namespace channels {

using Params = std::map<std::string, double>;

inline double param(const Params& p, const std::string& key, double fallback) {
  const auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

/// m(x) = βx, V[Z|X] = σ² on the real line.
inline ChannelMoments linear_gaussian(double beta, double sigma2) {
  if (beta == 0.0 || !(sigma2 > 0.0)) throw Error(ErrorCode::InvalidArgument, "need beta != 0 and sigma2 > 0");
  ChannelMoments ch;
  ch.name = "linear-gaussian";
  ch.mean_fn = [beta](const VectorXd& x) { return VectorXd(beta * x); };
  ch.cond_var_fn = [sigma2](const VectorXd&) { return MatrixXd::Constant(1, 1, sigma2); };
  ch.domain_lo = VectorXd::Constant(1, -std::numeric_limits<double>::infinity());
  ch.domain_hi = VectorXd::Constant(1, std::numeric_limits<double>::infinity());
  return ch;
}

/// m(x) = x / (1 + |x|), V[Z|X] = scale·(1 + x) on (lo, hi).
inline ChannelMoments saturating(double scale = 0.01, double lo = 0.0, double hi = 10.0) {
  if (!(scale > 0.0) || !(lo < hi) || lo < -1.0) throw Error(ErrorCode::InvalidArgument, "invalid saturating channel");
  ChannelMoments ch;
  ch.name = "saturating";
  ch.mean_fn = [](const VectorXd& x) { return VectorXd(x.array() / (1.0 + x.array().abs())); };
  ch.cond_var_fn = [scale](const VectorXd& x) { return MatrixXd::Constant(1, 1, scale * (1.0 + x[0])); };
  ch.domain_lo = VectorXd::Constant(1, lo);
  ch.domain_hi = VectorXd::Constant(1, hi);
  return ch;
}

/// m(x) = βx, V[Z|X] = σ²(1 + x²) on (−half_width, half_width).
inline ChannelMoments input_scaled_noise(double beta, double sigma2, double half_width) {
  if (beta == 0.0 || !(sigma2 > 0.0) || !(half_width > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "invalid input-scaled-noise channel");
  }
  ChannelMoments ch;
  ch.name = "input-scaled-noise";
  ch.mean_fn = [beta](const VectorXd& x) { return VectorXd(beta * x); };
  ch.cond_var_fn = [sigma2](const VectorXd& x) { return MatrixXd::Constant(1, 1, sigma2 * (1.0 + x[0] * x[0])); };
  ch.domain_lo = VectorXd::Constant(1, -half_width);
  ch.domain_hi = VectorXd::Constant(1, half_width);
  return ch;
}

inline std::vector<std::string> names() { return {"linear-gaussian", "saturating", "input-scaled-noise"}; }

inline ChannelMoments make(const std::string& name, const Params& p = {}) {
  if (name == "linear-gaussian") return linear_gaussian(param(p, "beta", 1.0), param(p, "sigma2", 1.0));
  if (name == "saturating") return saturating(param(p, "scale", 0.01), param(p, "lo", 0.0), param(p, "hi", 10.0));
  if (name == "input-scaled-noise") {
    return input_scaled_noise(param(p, "beta", 1.0), param(p, "sigma2", 1.0), param(p, "half_width", 5.0));
  }
  throw Error(ErrorCode::InvalidArgument, "unknown channel '" + name + "'");
}

}  // namespace channels

}  // namespace nubound
