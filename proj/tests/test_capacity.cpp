#include <gtest/gtest.h>

#include "nubound/capacity.hpp"
#include "test_util.hpp"

using namespace nubound;
using nubound::testing::throws_code;

namespace {

GaussianPseudoInput scalar_pseudo(double mean, double var) {
  return {VectorXd::Constant(1, mean), MatrixXd::Constant(1, 1, var)};
}

/// Independent evaluation for the saturating channel: x = m/(1 − m) on
/// (0, 10), V[Z|X] = scale·(1 + x), with its own draws.
std::pair<double, double> saturating_oracle(double mean, double var, double scale, std::size_t draws, std::uint64_t seed) {
  Rng rng(seed);
  const double sd = std::sqrt(var);
  const double top = 10.0 / 11.0;
  double sum = 0.0, sq = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < draws; ++i) {
    const double m = mean + sd * rng.normal();
    if (m <= 0.0 || m >= top) continue;
    const double v = scale * (1.0 + m / (1.0 - m));
    sum += v;
    sq += v * v;
    ++used;
  }
  const double n = static_cast<double>(used);
  const double ev = sum / n;
  const double sdv = std::sqrt((sq - n * ev * ev) / (n - 1.0));
  const double bound = 0.5 * std::log((var + ev) / ev);
  // d bound / d E = ½ (1/(var + E) − 1/E).
  const double grad = 0.5 * (1.0 / (var + ev) - 1.0 / ev);
  return {bound, std::fabs(grad) * sdv / std::sqrt(n)};
}

}  // namespace

TEST(BoundAt, LinearGaussianClosedForm) {
  const auto ch = channels::linear_gaussian(2.0, 0.5);
  for (double tau2 : {0.1, 1.0, 7.5}) {
    const auto e = bound_at(ch, scalar_pseudo(0.3, tau2), 2000, 9);
    EXPECT_NEAR(e.bound.nats, 0.5 * std::log1p(tau2 / 0.5), 1e-12);
    EXPECT_NEAR(e.stderr_nats, 0.0, 1e-8);
    EXPECT_EQ(e.escape_fraction, 0.0);
  }
}

TEST(BoundAt, DegenerateInputLimit) {
  const auto ch = channels::linear_gaussian(1.0, 1.0);
  const auto e = bound_at(ch, scalar_pseudo(0.0, 1e-12), 1000, 1);
  EXPECT_LT(e.bound.nats, 1e-11);
}

TEST(BoundAt, NumericalInversionMatchesAnalyticInverse) {
  auto numeric = channels::saturating();
  auto analytic = numeric;
  analytic.inverse = [](const VectorXd& m) -> std::optional<VectorXd> {
    if (m[0] <= 0.0 || m[0] >= 10.0 / 11.0) return std::nullopt;
    return VectorXd::Constant(1, m[0] / (1.0 - m[0]));
  };
  const auto p = scalar_pseudo(0.5, 0.01);
  const auto a = bound_at(numeric, p, 5000, 4);
  const auto b = bound_at(analytic, p, 5000, 4);
  EXPECT_NEAR(a.bound.nats, b.bound.nats, 1e-8);
  EXPECT_EQ(a.draws_used, b.draws_used);
}

TEST(BoundAt, SaturatingMatchesBruteForceMonteCarlo) {
  const auto ch = channels::saturating(0.01);
  for (auto [mean, var] : {std::pair{0.5, 0.01}, std::pair{0.3, 0.004}, std::pair{0.7, 0.002}}) {
    const auto e = bound_at(ch, scalar_pseudo(mean, var), 100000, 21);
    const auto [oracle, oracle_se] = saturating_oracle(mean, var, 0.01, 1000000, 12345);
    const double se = std::hypot(e.stderr_nats, oracle_se);
    EXPECT_LT(std::fabs(e.bound.nats - oracle), 2.0 * se) << "mean " << mean << " var " << var;
    EXPECT_GT(e.stderr_nats, 0.0);
  }
}

TEST(BoundAt, DomainEscape) {
  const auto ch = channels::saturating();
  EXPECT_TRUE(throws_code([&] { bound_at(ch, scalar_pseudo(0.5, 0.1), 2000, 1); }, ErrorCode::DomainEscape));
  // A tiny escape fraction is tolerated and reported.
  const auto e = bound_at(ch, scalar_pseudo(0.5, 0.015), 20000, 1);
  EXPECT_GT(e.escape_fraction, 0.0);
  EXPECT_LE(e.escape_fraction, kMaxEscapeFraction);
}

TEST(BoundAt, InversionFailure) {
  ChannelMoments ch = channels::saturating();
  ch.mean_fn = [](const VectorXd& x) {
    return VectorXd::Constant(1, x[0] > 5.0 ? std::nan("") : x[0] / (1.0 + x[0]));
  };
  EXPECT_TRUE(throws_code([&] { bound_at(ch, scalar_pseudo(0.5, 0.01), 1000, 1); }, ErrorCode::InversionFailure));
}

TEST(BoundAt, RejectsNonMonotoneMean) {
  ChannelMoments ch = channels::input_scaled_noise(1.0, 1.0, 3.0);
  ch.mean_fn = [](const VectorXd& x) { return VectorXd(x.array().square()); };
  EXPECT_TRUE(throws_code([&] { bound_at(ch, scalar_pseudo(1.0, 0.1), 1000, 1); }, ErrorCode::InvalidArgument));
}

TEST(BoundAt, RejectsBadArguments) {
  const auto ch = channels::linear_gaussian(1.0, 1.0);
  EXPECT_TRUE(throws_code([&] { bound_at(ch, scalar_pseudo(0.0, 1.0), 999, 1); }, ErrorCode::InvalidArgument));
  EXPECT_TRUE(throws_code([&] { bound_at(ch, scalar_pseudo(0.0, -1.0), 1000, 1); }, ErrorCode::NonPositiveDefinite));
  EXPECT_TRUE(throws_code([] { channels::make("no-such-channel"); }, ErrorCode::InvalidArgument));
}

TEST(BoundAt, DecreasingMeanFunctionIsInverted) {
  ChannelMoments ch = channels::saturating();
  ch.mean_fn = [](const VectorXd& x) { return VectorXd(-x.array() / (1.0 + x.array())); };
  auto ref = channels::saturating();
  const auto a = bound_at(ch, scalar_pseudo(-0.5, 0.01), 5000, 3);
  const auto b = bound_at(ref, scalar_pseudo(0.5, 0.01), 5000, 3);
  EXPECT_NEAR(a.bound.nats, b.bound.nats, 2e-3);
}

TEST(BoundAt, ReparametrizationInvariance) {
  // x = u³ on (0, 10^{1/3}) describes the same channel.
  const auto base = channels::saturating();
  ChannelMoments re = base;
  re.mean_fn = [&](const VectorXd& u) { return base.mean_fn(VectorXd(u.array().cube())); };
  re.cond_var_fn = [&](const VectorXd& u) { return base.cond_var_fn(VectorXd(u.array().cube())); };
  re.domain_lo = VectorXd::Constant(1, 0.0);
  re.domain_hi = VectorXd::Constant(1, std::cbrt(10.0));
  const auto p = scalar_pseudo(0.6, 0.005);
  const auto a = bound_at(base, p, 20000, 17);
  const auto b = bound_at(re, p, 20000, 17);
  EXPECT_LT(std::fabs(a.bound.nats - b.bound.nats), 3.0 * a.stderr_nats);
}

TEST(BoundAt, MoreNoiseLowersTheBound) {
  const auto lin1 = channels::linear_gaussian(1.0, 1.0), lin2 = channels::linear_gaussian(1.0, 2.0);
  EXPECT_GT(bound_at(lin1, scalar_pseudo(0, 1), 1000, 1).bound.nats, bound_at(lin2, scalar_pseudo(0, 1), 1000, 1).bound.nats);
  const auto s1 = channels::saturating(0.01), s2 = channels::saturating(0.015);
  const auto p = scalar_pseudo(0.5, 0.01);
  EXPECT_GT(bound_at(s1, p, 20000, 5).bound.nats, bound_at(s2, p, 20000, 5).bound.nats);
}

TEST(BoundAt, MultivariateWithExplicitInverse) {
  // Two independent linear-Gaussian coordinates: the bound adds up.
  ChannelMoments ch;
  ch.mean_fn = [](const VectorXd& x) { return VectorXd(2.0 * x); };
  ch.cond_var_fn = [](const VectorXd&) { return MatrixXd(MatrixXd::Identity(2, 2)); };
  ch.domain_lo = VectorXd::Constant(2, -1e300);
  ch.domain_hi = VectorXd::Constant(2, 1e300);
  ch.inverse = [](const VectorXd& m) -> std::optional<VectorXd> { return VectorXd(0.5 * m); };
  GaussianPseudoInput p{VectorXd::Zero(2), MatrixXd::Zero(2, 2)};
  p.covariance.diagonal() << 3.0, 0.5;
  const auto e = bound_at(ch, p, 1000, 1);
  EXPECT_NEAR(e.bound.nats, 0.5 * std::log(4.0) + 0.5 * std::log(1.5), 1e-12);
  ChannelMoments no_inverse = ch;
  no_inverse.inverse = nullptr;
  EXPECT_TRUE(throws_code([&] { bound_at(no_inverse, p, 1000, 1); }, ErrorCode::InvalidArgument));
}

TEST(MaximizeCapacityBound, LinearGaussianReachesVarianceCap) {
  const double sigma2 = 0.8, cap = 3.0;
  const auto r = maximize_capacity_bound(channels::linear_gaussian(1.5, sigma2), PseudoInputBox::scalar(-1, 1, 0.01, cap));
  EXPECT_NEAR(r.evaluation.bound.nats, 0.5 * std::log1p(cap / sigma2), 1e-3);
  EXPECT_NEAR(r.pseudo.covariance(0, 0), cap, 1e-2);
  EXPECT_FALSE(r.budget_exhausted);
}

TEST(MaximizeCapacityBound, DeterministicGivenSeed) {
  CapacityConfig cfg;
  cfg.mc_draws = 2000;
  cfg.max_evaluations = 150;
  const auto box = PseudoInputBox::scalar(0.2, 0.7, 1e-4, 0.01);
  const auto a = maximize_capacity_bound(channels::saturating(), box, cfg);
  const auto b = maximize_capacity_bound(channels::saturating(), box, cfg);
  EXPECT_EQ(a.evaluation.bound.nats, b.evaluation.bound.nats);
  EXPECT_EQ(a.parameters, b.parameters);
}

TEST(MaximizeCapacityBound, BudgetExhaustedReturnsBestSoFar) {
  CapacityConfig cfg;
  cfg.max_evaluations = 6;
  const auto r = maximize_capacity_bound(channels::linear_gaussian(1.0, 1.0), PseudoInputBox::scalar(-1, 1, 0.01, 4.0), cfg);
  EXPECT_TRUE(r.budget_exhausted);
  EXPECT_GT(r.evaluation.bound.nats, 0.0);
}

TEST(MaximizeCapacityBound, InfeasibleBox) {
  // Every start point puts most of its mass outside (0, 10/11).
  EXPECT_TRUE(throws_code(
      [] { maximize_capacity_bound(channels::saturating(), PseudoInputBox::scalar(2.0, 3.0, 1.0, 4.0)); },
      ErrorCode::InfeasibleSearchBox));
  PseudoInputBox inverted = PseudoInputBox::scalar(1.0, -1.0, 0.1, 1.0);
  EXPECT_TRUE(throws_code([&] { maximize_capacity_bound(channels::linear_gaussian(1, 1), inverted); },
                          ErrorCode::InvalidArgument));
}

TEST(MaximizeCapacityBound, InputScaledNoiseOptimumIsStationary) {
  CapacityConfig cfg;
  cfg.mc_draws = 5000;
  const auto ch = channels::input_scaled_noise(1.0, 0.5, 4.0);
  const auto box = PseudoInputBox::scalar(-1.0, 1.0, 0.01, 2.0);
  const auto r = maximize_capacity_bound(ch, box, cfg);
  const double best = r.evaluation.bound.nats;
  for (Eigen::Index i = 0; i < r.parameters.size(); ++i) {
    for (double f : {0.99, 1.01}) {
      VectorXd t = r.parameters;
      t[i] = t[i] == 0.0 ? (f - 1.0) : t[i] * f;
      t = t.cwiseMax(box.lower()).cwiseMin(box.upper());
      try {
        const auto e = bound_at(ch, pseudo_from_parameters(t, 1), cfg.mc_draws, cfg.seed);
        EXPECT_LE(e.bound.nats, best + 2.0 * e.stderr_nats) << "coordinate " << i << " factor " << f;
      } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DomainEscape);
      }
    }
  }
}

TEST(MaximizeCapacityBound, SaturatingDominatesRandomPseudoInputs) {
  CapacityConfig cfg;
  cfg.mc_draws = 5000;
  const auto ch = channels::saturating();
  const auto box = PseudoInputBox::scalar(0.1, 0.8, 1e-5, 0.05);
  const auto r = maximize_capacity_bound(ch, box, cfg);
  Rng rng(404);
  int checked = 0;
  while (checked < 50) {
    const double mean = rng.uniform(0.1, 0.8);
    const double var = std::exp(rng.uniform(std::log(1e-5), std::log(0.05)));
    try {
      const auto e = bound_at(ch, scalar_pseudo(mean, var), cfg.mc_draws, cfg.seed);
      EXPECT_LE(e.bound.nats, r.evaluation.bound.nats + 1e-9);
      ++checked;
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::DomainEscape);
    }
  }
}

TEST(PseudoInputBox, ParameterLayout) {
  PseudoInputBox b;
  b.mean_lo = VectorXd::Constant(2, -1);
  b.mean_hi = VectorXd::Constant(2, 1);
  b.log_sd_lo = VectorXd::Constant(2, -2);
  b.log_sd_hi = VectorXd::Constant(2, 0);
  b.offdiag_limit = 0.5;
  EXPECT_EQ(b.parameter_count(), 5);
  VectorXd theta(5);
  theta << 0.1, -0.2, std::log(2.0), std::log(0.5), 0.3;
  const auto p = pseudo_from_parameters(theta, 2);
  MatrixXd l(2, 2);
  l << 2.0, 0.0, 0.3, 0.5;
  EXPECT_TRUE(p.covariance.isApprox(l * l.transpose(), 1e-14));
  EXPECT_DOUBLE_EQ(p.mean[1], -0.2);
}
