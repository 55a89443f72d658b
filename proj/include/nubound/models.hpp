#pragma once

// Data-generating mechanisms for the simulation study and their ground-truth
// mutual information.
//
//   BivariateNormal: X ~ N(0, σ_X²),               Z = βX + ε
//   Mixture:         X ~ ½N(μ₁, σ₁²) + ½N(μ₂, σ₂²), Z = βX + ε
//   DiscreteInput:   X uniform on a finite support, Z = X + ε   (convergence demo)
//
// with ε ~ N(0, σ_ε²) independent of X.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "nubound/bounds.hpp"
#include "nubound/error.hpp"
#include "nubound/rng.hpp"
#include "nubound/sample.hpp"
#include "nubound/special.hpp"
#include "nubound/transforms.hpp"

namespace nubound {

enum class ModelVariant { BivariateNormal, Mixture, DiscreteInput };

inline std::string_view to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::BivariateNormal: return "gaussian";
    case ModelVariant::Mixture: return "mixture";
    case ModelVariant::DiscreteInput: return "discrete";
  }
  return "?";
}

inline ModelVariant parse_model_variant(std::string_view name) {
  if (name == "gaussian") return ModelVariant::BivariateNormal;
  if (name == "mixture") return ModelVariant::Mixture;
  if (name == "discrete") return ModelVariant::DiscreteInput;
  throw Error(ErrorCode::InvalidArgument, "unknown model '" + std::string(name) + "'");
}

struct GenModel {
  ModelVariant variant = ModelVariant::BivariateNormal;
  double beta = 1.0;
  double sigma_eps2 = 1.0;
  // BivariateNormal
  double sigma_x2 = 1.0;
  // Mixture (equal weights)
  double mu1 = 5.0;
  double mu2 = -5.0;
  double sigma1_2 = 25.0 / 4.0;
  double sigma2_2 = 25.0 / 4.0;
  // DiscreteInput
  std::vector<double> support;
  std::vector<double> probs;
  double cond_sd = 1.0;

  static GenModel bivariate_normal(double beta, double sigma_eps2, double sigma_x2) {
    GenModel m;
    m.variant = ModelVariant::BivariateNormal;
    m.beta = beta;
    m.sigma_eps2 = sigma_eps2;
    m.sigma_x2 = sigma_x2;
    m.validate();
    return m;
  }

  static GenModel mixture(double beta, double sigma_eps2) {
    GenModel m;
    m.variant = ModelVariant::Mixture;
    m.beta = beta;
    m.sigma_eps2 = sigma_eps2;
    m.validate();
    return m;
  }

  static GenModel discrete(std::vector<double> support, std::vector<double> probs, double cond_sd) {
    GenModel m;
    m.variant = ModelVariant::DiscreteInput;
    m.support = std::move(support);
    m.probs = std::move(probs);
    m.cond_sd = cond_sd;
    m.beta = 1.0;
    m.sigma_eps2 = cond_sd * cond_sd;
    m.validate();
    return m;
  }

  /// Equally spaced support {0, gap, 2·gap, ...} with uniform probabilities.
  static GenModel discrete_uniform(int support_size, double gap, double cond_sd) {
    std::vector<double> s(static_cast<std::size_t>(support_size));
    for (int i = 0; i < support_size; ++i) s[static_cast<std::size_t>(i)] = gap * i;
    std::vector<double> p(s.size(), 1.0 / support_size);
    return discrete(std::move(s), std::move(p), cond_sd);
  }

  void validate() const {
    if (variant == ModelVariant::DiscreteInput) {
      detail::require(!support.empty() && support.size() == probs.size(), ErrorCode::InvalidArgument,
                      "support and probabilities must be non-empty and aligned");
      detail::require(cond_sd > 0.0, ErrorCode::InvalidArgument, "cond_sd must be positive");
      double total = 0.0;
      for (double p : probs) {
        detail::require(p > 0.0, ErrorCode::InvalidArgument, "probabilities must be positive");
        total += p;
      }
      detail::require(std::fabs(total - 1.0) < 1e-9, ErrorCode::InvalidArgument, "probabilities must sum to one");
      return;
    }
    detail::require(sigma_eps2 > 0.0, ErrorCode::InvalidArgument, "sigma_eps2 must be positive");
    detail::require(std::isfinite(beta), ErrorCode::InvalidArgument, "beta must be finite");
    if (variant == ModelVariant::BivariateNormal) {
      detail::require(sigma_x2 > 0.0, ErrorCode::InvalidArgument, "sigma_x2 must be positive");
    } else {
      detail::require(sigma1_2 > 0.0 && sigma2_2 > 0.0, ErrorCode::InvalidArgument, "mixture variances must be positive");
    }
  }

  double noise_variance() const { return variant == ModelVariant::DiscreteInput ? cond_sd * cond_sd : sigma_eps2; }
  double slope() const { return variant == ModelVariant::DiscreteInput ? 1.0 : beta; }

  double input_mean() const {
    switch (variant) {
      case ModelVariant::BivariateNormal: return 0.0;
      case ModelVariant::Mixture: return 0.5 * (mu1 + mu2);
      case ModelVariant::DiscreteInput: return std::inner_product(support.begin(), support.end(), probs.begin(), 0.0);
    }
    return 0.0;
  }

  double input_variance() const {
    switch (variant) {
      case ModelVariant::BivariateNormal: return sigma_x2;
      case ModelVariant::Mixture: {
        const double m = input_mean();
        return 0.5 * (sigma1_2 + (mu1 - m) * (mu1 - m)) + 0.5 * (sigma2_2 + (mu2 - m) * (mu2 - m));
      }
      case ModelVariant::DiscreteInput: {
        const double m = input_mean();
        double v = 0.0;
        for (std::size_t i = 0; i < support.size(); ++i) v += probs[i] * (support[i] - m) * (support[i] - m);
        return v;
      }
    }
    return 0.0;
  }

  double output_variance() const { return slope() * slope() * input_variance() + noise_variance(); }

  /// Shannon entropy of a discrete input, nats.
  double input_entropy() const {
    detail::require(variant == ModelVariant::DiscreteInput, ErrorCode::InvalidArgument, "input entropy needs a discrete input");
    double h = 0.0;
    for (double p : probs) h -= p * std::log(p);
    return h;
  }
};

/// Marginal law of X, for building the Gaussianizing map.
inline UnivariateLaw input_law(const GenModel& m) {
  switch (m.variant) {
    case ModelVariant::BivariateNormal: return normal_law(0.0, m.sigma_x2);
    case ModelVariant::Mixture: return mixture_law(m.mu1, m.sigma1_2, m.mu2, m.sigma2_2);
    case ModelVariant::DiscreteInput: break;
  }
  throw Error(ErrorCode::InvalidArgument, "a discrete input has no Gaussianizing map");
}

/// Parameter vector drawn from the sampling scheme of each model.
inline GenModel sample_params(ModelVariant variant, Rng& rng) {
  switch (variant) {
    case ModelVariant::BivariateNormal: {
      const double beta = rng.uniform(1.0, 10.0);
      const double se2 = std::pow(10.0, rng.uniform(-2.0, 2.0));
      const double sx2 = std::pow(10.0, rng.uniform(-2.0, 2.0));
      return GenModel::bivariate_normal(beta, se2, sx2);
    }
    case ModelVariant::Mixture: {
      const double beta = std::pow(10.0, rng.uniform(-1.0, 1.0));
      const double se2 = std::pow(10.0, rng.uniform(-2.5, 2.5));
      return GenModel::mixture(beta, se2);
    }
    case ModelVariant::DiscreteInput:
      // Demo construction: two points a gap of 2 apart, noise sd on (0.01, 1).
      return GenModel::discrete_uniform(2, 2.0, std::pow(10.0, rng.uniform(-2.0, 0.0)));
  }
  throw Error(ErrorCode::InvalidArgument, "unknown model variant");
}

namespace detail {

inline double draw_input(const GenModel& m, Rng& rng) {
  switch (m.variant) {
    case ModelVariant::BivariateNormal: return std::sqrt(m.sigma_x2) * rng.normal();
    case ModelVariant::Mixture:
      return rng.bernoulli(0.5) ? rng.normal(m.mu1, std::sqrt(m.sigma1_2)) : rng.normal(m.mu2, std::sqrt(m.sigma2_2));
    case ModelVariant::DiscreteInput: {
      double u = rng.uniform();
      std::size_t k = 0;
      while (k + 1 < m.probs.size() && u >= m.probs[k]) u -= m.probs[k++];
      return m.support[k];
    }
  }
  return 0.0;
}

}  // namespace detail

inline JointSample generate(const GenModel& m, std::size_t n, Rng& rng) {
  detail::require(n >= 1, ErrorCode::InvalidArgument, "n must be at least 1");
  JointSample s;
  s.x.resize(n);
  s.z.resize(n);
  const double noise_sd = std::sqrt(m.noise_variance());
  for (std::size_t i = 0; i < n; ++i) {
    s.x[i] = detail::draw_input(m, rng);
    s.z[i] = m.slope() * s.x[i] + noise_sd * rng.normal();
  }
  return s;
}

namespace detail {

/// Components (weight, mean, variance) of the Gaussian mixture density of Z.
struct MixtureComponent {
  double weight;
  double mean;
  double var;
};

inline std::vector<MixtureComponent> output_components(const GenModel& m) {
  switch (m.variant) {
    case ModelVariant::BivariateNormal: return {{1.0, 0.0, m.output_variance()}};
    case ModelVariant::Mixture:
      return {{0.5, m.beta * m.mu1, m.beta * m.beta * m.sigma1_2 + m.sigma_eps2},
              {0.5, m.beta * m.mu2, m.beta * m.beta * m.sigma2_2 + m.sigma_eps2}};
    case ModelVariant::DiscreteInput: {
      std::vector<MixtureComponent> c;
      for (std::size_t i = 0; i < m.support.size(); ++i) c.push_back({m.probs[i], m.support[i], m.noise_variance()});
      return c;
    }
  }
  return {};
}

inline double mixture_log_density(const std::vector<MixtureComponent>& comps, double z) {
  double acc = -HUGE_VAL;
  for (const auto& c : comps) acc = log_sum_exp(acc, std::log(c.weight) + normal_log_pdf(z, c.mean, c.var));
  return acc;
}

/// Running mean over the first 90% of terms must stay within 3 standard
/// errors of the final mean, plus a summation round-off allowance.
inline void check_convergence(const std::vector<double>& terms, double mean, double stderr_) {
  const std::size_t cut = terms.size() * 9 / 10;
  double partial = 0.0;
  for (std::size_t i = 0; i < cut; ++i) partial += terms[i];
  partial /= static_cast<double>(cut);
  if (std::fabs(partial - mean) > 3.0 * stderr_ + 1e-12 * (1.0 + std::fabs(mean))) {
    throw Error(ErrorCode::NonConvergence, "Monte Carlo running mean drifted over the last 10% of draws");
  }
}

}  // namespace detail

/// Log density of Z under the model.
inline double output_log_density(const GenModel& m, double z) {
  return detail::mixture_log_density(detail::output_components(m), z);
}

enum class TruthMethod { ClosedForm, MonteCarlo };

struct TruthResult {
  double mi_nats = 0.0;
  TruthMethod method = TruthMethod::ClosedForm;
  std::size_t mc_draws = 0;
  double mc_stderr = 0.0;

  double mi_bits() const { return nats_to_bits(mi_nats); }
  double stderr_bits() const { return nats_to_bits(mc_stderr); }
};

/// Ground-truth I(X;Z).
///
/// Mixture: h(Z) is the Monte Carlo average of −log f(Z_m) with the exact
/// mixture density and h(Z|X) = ½ log(2πe σ_ε²). DiscreteInput averages the
/// pointwise log ratio log f(Z|X)/f(Z), which has the same expectation but
/// does not carry the noise of h(Z|X) when the components separate.
inline TruthResult true_mi(const GenModel& m, std::size_t mc_draws, Rng& rng) {
  TruthResult t;
  if (m.variant == ModelVariant::BivariateNormal) {
    t.mi_nats = 0.5 * std::log1p(m.beta * m.beta * m.sigma_x2 / m.sigma_eps2);
    return t;
  }
  if (mc_draws < 10000) throw Error(ErrorCode::InvalidArgument, "Monte Carlo truth needs at least 1e4 draws");
  t.method = TruthMethod::MonteCarlo;
  t.mc_draws = mc_draws;
  const auto comps = detail::output_components(m);
  const double noise_var = m.noise_variance();
  const double h_cond = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * noise_var);
  std::vector<double> terms(mc_draws);
  const double noise_sd = std::sqrt(noise_var);
  for (std::size_t i = 0; i < mc_draws; ++i) {
    if (m.variant == ModelVariant::Mixture) {
      const auto& c = comps[rng.bernoulli(0.5) ? 0 : 1];
      const double z = rng.normal(c.mean, std::sqrt(c.var));
      terms[i] = -detail::mixture_log_density(comps, z) - h_cond;
    } else {
      const double x = detail::draw_input(m, rng);
      const double z = x + noise_sd * rng.normal();
      terms[i] = normal_log_pdf(z, x, noise_var) - detail::mixture_log_density(comps, z);
    }
  }
  double mean = 0.0;
  for (double v : terms) mean += v;
  mean /= static_cast<double>(mc_draws);
  double ss = 0.0;
  for (double v : terms) ss += (v - mean) * (v - mean);
  t.mi_nats = mean;
  t.mc_stderr = std::sqrt(ss / static_cast<double>(mc_draws - 1) / static_cast<double>(mc_draws));
  detail::check_convergence(terms, mean, t.mc_stderr);
  return t;
}

/// ν(Z|X) = E{V[Z|X]} / V[Z] in closed form.
inline double population_nu_output(const GenModel& m) { return m.noise_variance() / m.output_variance(); }

/// Population (V[Z], E{V[Z|X]}) as 1×1 matrices.
inline std::pair<MatrixXd, MatrixXd> output_moments(const GenModel& m) {
  MatrixXd total(1, 1), cond(1, 1);
  total(0, 0) = m.output_variance();
  cond(0, 0) = m.noise_variance();
  return {total, cond};
}

/// E[X̃ | Z = z] for the mixture model, tabulated on a grid.
///
/// Given its component, X | Z = z is Gaussian, so E[s(X) | z] is a
/// component-weighted Gauss–Hermite average of s = Φ⁻¹∘F_X.
class MixtureConditionalMean {
 public:
  explicit MixtureConditionalMean(const GenModel& m, int grid_points = 4001, int gh_nodes = 48)
      : model_(m), map_(GaussianizingMap::known(input_law(m))), gh_(gh_nodes) {
    detail::require(m.variant == ModelVariant::Mixture, ErrorCode::InvalidArgument, "mixture model required");
    const auto comps = detail::output_components(m);
    lo_ = HUGE_VAL;
    hi_ = -HUGE_VAL;
    for (const auto& c : comps) {
      lo_ = std::min(lo_, c.mean - 10.0 * std::sqrt(c.var));
      hi_ = std::max(hi_, c.mean + 10.0 * std::sqrt(c.var));
    }
    step_ = (hi_ - lo_) / (grid_points - 1);
    values_.resize(static_cast<std::size_t>(grid_points));
    for (int i = 0; i < grid_points; ++i) values_[static_cast<std::size_t>(i)] = exact(lo_ + step_ * i);
  }

  /// Quadrature value without the grid.
  double exact(double z) const {
    const double beta = model_.beta, se2 = model_.sigma_eps2;
    const double mus[2] = {model_.mu1, model_.mu2};
    const double vars[2] = {model_.sigma1_2, model_.sigma2_2};
    double logw[2];
    for (int c = 0; c < 2; ++c) logw[c] = normal_log_pdf(z, beta * mus[c], beta * beta * vars[c] + se2);
    const double norm = log_sum_exp(logw[0], logw[1]);
    double out = 0.0;
    for (int c = 0; c < 2; ++c) {
      const double w = std::exp(logw[c] - norm);
      if (w < 1e-300) continue;
      const double post_var = 1.0 / (1.0 / vars[c] + beta * beta / se2);
      const double post_mean = post_var * (mus[c] / vars[c] + beta * z / se2);
      out += w * gh_.expect([this](double x) { return safe_forward(x); }, post_mean, post_var);
    }
    return out;
  }

  /// Catmull–Rom interpolation on the grid; exact quadrature outside it.
  double operator()(double z) const {
    const double pos = (z - lo_) / step_;
    if (pos < 1.0 || pos > static_cast<double>(values_.size()) - 3.0) return exact(z);
    const auto i = static_cast<std::size_t>(pos);
    const double t = pos - static_cast<double>(i);
    const double p0 = values_[i - 1], p1 = values_[i], p2 = values_[i + 1], p3 = values_[i + 2];
    return p1 + 0.5 * t * (p2 - p0 + t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + t * (3.0 * (p1 - p2) + p3 - p0)));
  }

  const GaussianizingMap& map() const { return map_; }

 private:
  double safe_forward(double x) const {
    try {
      return map_.forward(x);
    } catch (const Error&) {
      return x < map_.law().median ? normal_quantile(kProbClip) : -normal_quantile(kProbClip);
    }
  }

  GenModel model_;
  GaussianizingMap map_;
  GaussHermite gh_;
  double lo_ = 0.0, hi_ = 0.0, step_ = 1.0;
  std::vector<double> values_;
};

/// Population quantities for the input-side bounds, X̃ = Φ⁻¹(F_X(X)).
struct PopulationMoments {
  double cond_mean_var = 0.0;  // V{E[X̃|Z]}, with V[X̃] = 1
  double cond_mean_var_se = 0.0;
  double corr2 = 0.0;  // Corr²(X̃, Z)
  double corr2_se = 0.0;
  std::size_t draws = 0;

  double nu_input() const { return 1.0 - cond_mean_var; }
  double nu_bound_nats() const { return -0.5 * std::log1p(-cond_mean_var); }
  double nu_bound_se() const { return cond_mean_var_se / (2.0 * (1.0 - cond_mean_var)); }
  double corr_bound_nats() const { return -0.5 * std::log1p(-corr2); }
  double corr_bound_se() const { return corr2_se / (2.0 * (1.0 - corr2)); }
};

/// V{E[X̃|Z]} and Corr²(X̃, Z). Closed form for the bivariate normal model
/// (both equal ρ²); Monte Carlo over (X, Z) draws for the mixture.
inline PopulationMoments population_moments(const GenModel& m, std::size_t draws, Rng& rng) {
  PopulationMoments pm;
  if (m.variant == ModelVariant::BivariateNormal) {
    const double rho2 = m.beta * m.beta * m.sigma_x2 / m.output_variance();
    pm.cond_mean_var = pm.corr2 = rho2;
    return pm;
  }
  detail::require(m.variant == ModelVariant::Mixture, ErrorCode::InvalidArgument, "continuous input required");
  detail::require(draws >= 1000, ErrorCode::InvalidArgument, "need at least 1000 draws");
  const MixtureConditionalMean cm(m);
  const double sd_z = std::sqrt(m.output_variance());
  const double noise_sd = std::sqrt(m.sigma_eps2);
  double sum_m2 = 0.0, sum_m4 = 0.0, sum_c = 0.0, sum_c2 = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    const double x = detail::draw_input(m, rng);
    const double z = m.beta * x + noise_sd * rng.normal();
    const double xt = cm.map().forward(x);
    const double mz = cm(z);
    const double m2 = mz * mz;
    sum_m2 += m2;
    sum_m4 += m2 * m2;
    // X̃ has mean 0 and variance 1, Z has mean 0 and known variance.
    const double c = xt * z / sd_z;
    sum_c += c;
    sum_c2 += c * c;
  }
  const auto n = static_cast<double>(draws);
  pm.draws = draws;
  pm.cond_mean_var = sum_m2 / n;
  pm.cond_mean_var_se = std::sqrt(std::max(sum_m4 / n - pm.cond_mean_var * pm.cond_mean_var, 0.0) / n);
  const double corr = sum_c / n;
  const double corr_se = std::sqrt(std::max(sum_c2 / n - corr * corr, 0.0) / n);
  pm.corr2 = corr * corr;
  pm.corr2_se = 2.0 * std::fabs(corr) * corr_se;
  return pm;
}

}  // namespace nubound
