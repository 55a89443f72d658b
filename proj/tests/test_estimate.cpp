#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>

#include "nubound/estimate.hpp"
#include "nubound/models.hpp"
#include "test_util.hpp"

using namespace nubound;
using nubound::testing::mean_of;
using nubound::testing::median_of;
using nubound::testing::throws_code;

namespace {

std::pair<std::vector<double>, std::vector<double>> gaussian_pair(std::size_t n, double rho, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n), z(n);
  const double c = std::sqrt(1.0 - rho * rho);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = rng.normal();
    z[i] = rho * x[i] + c * rng.normal();
  }
  return {x, z};
}

double boost_quantile(double p) { return boost::math::quantile(boost::math::normal_distribution<double>(), p); }
double boost_cdf(double x) { return boost::math::cdf(boost::math::normal_distribution<double>(), x); }

}  // namespace

TEST(NuHat, IndependenceGivesSmallBound) {
  std::vector<double> bounds;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto [x, z] = gaussian_pair(50, 0.0, 1000 + s);
    const auto r = nu_hat_gaussianized(x, z);
    ASSERT_TRUE(r.valid());
    bounds.push_back(*r.bound_nats);
  }
  EXPECT_LT(median_of(bounds), 0.05);
}

TEST(NuHat, LargeSampleGaussianMatchesClosedForm) {
  for (double rho : {0.3, 0.8}) {
    const auto [x, z] = gaussian_pair(10000, rho, 7);
    const auto r = nu_hat_gaussianized(x, z);
    EXPECT_NEAR(*r.bound_nats, -0.5 * std::log(1.0 - rho * rho), 0.02) << rho;
  }
}

TEST(NuHat, NoiselessLinearData) {
  Rng rng(3);
  std::vector<double> z(40), x(40);
  for (std::size_t i = 0; i < 40; ++i) {
    z[i] = rng.normal();
    x[i] = 0.9 * z[i];
  }
  for (NuForm form : {NuForm::FittedOverSample, NuForm::FittedOverKnown}) {
    PipelineConfig cfg;
    cfg.form = form;
    cfg.known_variance = 0.81 * [&] {
      double m = mean_of(z), ss = 0.0;
      for (double v : z) ss += (v - m) * (v - m);
      return ss / 39.0;
    }();
    const auto r = nu_hat_gaussianized(x, z, cfg);
    EXPECT_NEAR(r.fitted_variance, cfg.known_variance, 1e-8);
    EXPECT_LE(r.nu_hat, 1e-6);
    if (r.valid()) EXPECT_GE(*r.bound_nats, 6.9);
    else EXPECT_TRUE(std::isinf(r.statistic()));
  }
}

TEST(NuHat, RowOrderInvariant) {
  auto [x, z] = gaussian_pair(60, 0.6, 4);
  const auto a = nu_hat_gaussianized(x, z);
  std::reverse(x.begin(), x.end());
  std::reverse(z.begin(), z.end());
  const auto b = nu_hat_gaussianized(x, z);
  EXPECT_NEAR(a.nu_hat, b.nu_hat, 1e-12);
  EXPECT_NEAR(a.lambda, b.lambda, 1e-12 * a.lambda);
}

TEST(NuHat, FormsAgreeWithTheirDefinitions) {
  const auto [x, z] = gaussian_pair(50, 0.7, 5);
  const PenalizedSplineSystem sys(z, x, 10);
  const double lam = 0.1 * sys.lambda_scale();
  const auto fit = spline::fit_fixed(z, x, 10, lam);
  double mf = mean_of(fit.fitted), mx = mean_of(x), vf = 0.0, vx = 0.0, rss = 0.0;
  for (std::size_t i = 0; i < 50; ++i) {
    vf += (fit.fitted[i] - mf) * (fit.fitted[i] - mf);
    vx += (x[i] - mx) * (x[i] - mx);
    rss += (x[i] - fit.fitted[i]) * (x[i] - fit.fitted[i]);
  }
  vf /= 49.0;
  vx /= 49.0;
  PipelineConfig cfg;
  cfg.known_variance = 1.3;
  cfg.form = NuForm::FittedOverKnown;
  EXPECT_NEAR(nu_hat_fixed(x, z, lam, cfg).nu_hat, 1.0 - vf / 1.3, 1e-12);
  cfg.form = NuForm::FittedOverSample;
  EXPECT_NEAR(nu_hat_fixed(x, z, lam, cfg).nu_hat, 1.0 - vf / vx, 1e-12);
  cfg.form = NuForm::ResidualOverKnown;
  EXPECT_NEAR(nu_hat_fixed(x, z, lam, cfg).nu_hat, rss / (50.0 - fit.hat_trace) / 1.3, 1e-12);
}

TEST(NuHat, FixedLambdaReproducesCvFit) {
  const auto [x, z] = gaussian_pair(30, 0.5, 6);
  const auto cv = nu_hat_gaussianized(x, z);
  EXPECT_EQ(nu_hat_fixed(x, z, cv.lambda).nu_hat, cv.nu_hat);
}

TEST(NuHat, InvalidWhenFittedVarianceExceedsKnown) {
  const auto [x, z] = gaussian_pair(30, 0.95, 8);
  PipelineConfig cfg;
  cfg.form = NuForm::FittedOverKnown;
  cfg.known_variance = 0.1;
  const auto r = nu_hat_gaussianized(x, z, cfg);
  EXPECT_LE(r.nu_hat, 0.0);
  EXPECT_FALSE(r.valid());
  EXPECT_EQ(r.statistic(), kInf);
}

TEST(NuHat, Errors) {
  std::vector<double> x(14, 0.0), z(14, 0.0), z2(15, 0.0);
  EXPECT_TRUE(throws_code([&] { nu_hat_gaussianized(x, z); }, ErrorCode::TooFewPoints));
  EXPECT_TRUE(throws_code([&] { nu_hat_gaussianized(x, z2); }, ErrorCode::InvalidArgument));
}

TEST(NuHat, CorrelationFormMatchesSampleCorrelation) {
  const auto [x, z] = gaussian_pair(40, 0.5, 9);
  const double mx = mean_of(x), mz = mean_of(z);
  double sxx = 0.0, szz = 0.0, sxz = 0.0;
  for (std::size_t i = 0; i < 40; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    szz += (z[i] - mz) * (z[i] - mz);
    sxz += (x[i] - mx) * (z[i] - mz);
  }
  const double r2 = sxz * sxz / (sxx * szz);
  const auto r = nu_hat_correlation(x, z);
  EXPECT_NEAR(r.nu_hat, 1.0 - r2, 1e-12);
  EXPECT_NEAR(*r.bound_nats, -0.5 * std::log(1.0 - r2), 1e-12);
}

TEST(Bca, SymmetricUnbiasedReducesToPercentile) {
  // Replicates are N(θ, σ²) draws and the jackknife is symmetric, so z0 and
  // a are near zero and BCa limits equal percentile limits.
  const double theta = 1.0;
  const int b = 4001;
  Rng rng(10);
  std::vector<double> boot(b);
  for (auto& v : boot) v = rng.normal(theta, 0.3);
  std::sort(boot.begin(), boot.end());
  const double estimate = boot[b / 2];
  const std::vector<double> jack{-2.0, -1.0, 0.0, 1.0, 2.0};
  const auto ci = bca_from_replicates(estimate, boot, jack, 0.90);
  EXPECT_NEAR(ci.z0, 0.0, 1e-3);
  EXPECT_EQ(ci.a, 0.0);
  const double step = boot[b / 2 + 1] - boot[b / 2];
  const double p_lo = boot[static_cast<std::size_t>(std::lround(0.05 * (b + 1))) - 1];
  const double p_hi = boot[static_cast<std::size_t>(std::lround(0.95 * (b + 1))) - 1];
  const double step_lo = boot[static_cast<std::size_t>(0.05 * b) + 1] - boot[static_cast<std::size_t>(0.05 * b)];
  const double step_hi = boot[static_cast<std::size_t>(0.95 * b) + 1] - boot[static_cast<std::size_t>(0.95 * b)];
  EXPECT_LE(std::fabs(ci.lower - p_lo), std::max(step, step_lo) + 1e-12);
  EXPECT_LE(std::fabs(ci.upper - p_hi), std::max(step, step_hi) + 1e-12);
}

TEST(Bca, MatchesHandComputedAdjustment) {
  // 1..B replicates, estimate placed at 30%, skewed jackknife.
  const int b = 999;
  std::vector<double> boot(b);
  for (int i = 0; i < b; ++i) boot[static_cast<std::size_t>(i)] = i + 1.0;
  const double estimate = 300.5;
  const std::vector<double> jack{0.0, 0.0, 0.0, 1.0, 5.0};
  const auto ci = bca_from_replicates(estimate, boot, jack, 0.90);

  const double z0 = boost_quantile(300.0 / b);
  double m = mean_of(jack), s2 = 0.0, s3 = 0.0;
  for (double v : jack) {
    s2 += (m - v) * (m - v);
    s3 += (m - v) * (m - v) * (m - v);
  }
  const double a = s3 / (6.0 * std::pow(s2, 1.5));
  EXPECT_NEAR(ci.z0, z0, 1e-9);
  EXPECT_NEAR(ci.a, a, 1e-12);
  const auto pos = [&](double alpha) {
    const double za = boost_quantile(alpha);
    return boost_cdf(z0 + (z0 + za) / (1.0 - a * (z0 + za))) * (b + 1);
  };
  // Replicate i has value i, so the interpolated order statistic is the position.
  EXPECT_NEAR(ci.lower, std::clamp(pos(0.05), 1.0, double(b)), 1e-6);
  EXPECT_NEAR(ci.upper, std::clamp(pos(0.95), 1.0, double(b)), 1e-6);
}

TEST(Bca, InfiniteReplicatesSortLast) {
  std::vector<double> boot(1000);
  for (int i = 0; i < 1000; ++i) boot[static_cast<std::size_t>(i)] = i < 900 ? i / 900.0 : kInf;
  const std::vector<double> jack{0.1, 0.2, 0.3, kInf};
  const auto ci = bca_from_replicates(0.5, boot, jack, 0.90);
  EXPECT_NEAR(ci.invalid_fraction, 0.1, 1e-12);
  EXPECT_TRUE(std::isfinite(ci.lower));
  EXPECT_TRUE(std::isinf(ci.upper));
  EXPECT_NEAR(ci.a, 0.0, 1e-12);
}

TEST(Bca, Errors) {
  EXPECT_TRUE(throws_code([] { bca_from_replicates(0.0, {}, {}, 0.9); }, ErrorCode::InvalidArgument));
  EXPECT_TRUE(throws_code([] { bca_from_replicates(0.0, {1.0}, {}, 1.0); }, ErrorCode::InvalidArgument));
  const auto [x, z] = gaussian_pair(30, 0.5, 11);
  BcaConfig bca;
  bca.replicates = 199;
  EXPECT_TRUE(throws_code([&] { nu_bound_interval_gaussianized(x, z, {}, bca); }, ErrorCode::InvalidArgument));
}

TEST(BoundInterval, DeterministicAndStableInB) {
  const auto [x, z] = gaussian_pair(25, 0.8, 12);
  BcaConfig bca;
  bca.seed = 99;
  bca.replicates = 2000;
  const auto a = nu_bound_interval_gaussianized(x, z, {}, bca);
  const auto a2 = nu_bound_interval_gaussianized(x, z, {}, bca);
  EXPECT_EQ(a.interval.lower, a2.interval.lower);
  EXPECT_EQ(a.interval.upper, a2.interval.upper);
  bca.replicates = 4000;
  const auto b = nu_bound_interval_gaussianized(x, z, {}, bca);
  EXPECT_LT(std::fabs(a.interval.lower - b.interval.lower), 0.02);
  EXPECT_LT(std::fabs(a.interval.upper - b.interval.upper), 0.02);
  EXPECT_LE(a.interval.lower, a.interval.estimate);
  EXPECT_GE(a.interval.upper, a.interval.estimate);
  EXPECT_EQ(a.interval.estimate, *a.point.bound_nats);
}

TEST(BoundInterval, CorrelationIntervalBracketsEstimate) {
  const auto [x, z] = gaussian_pair(25, 0.6, 13);
  BcaConfig bca;
  bca.replicates = 1000;
  const auto r = correlation_bound_interval_gaussianized(x, z, bca);
  EXPECT_LE(r.interval.lower, r.interval.estimate);
  EXPECT_GE(r.interval.upper, r.interval.estimate);
  EXPECT_FALSE(r.interval.degenerate);
}

TEST(Composite, TakesLargerOfKnnAndLowerLimit) {
  BcaInterval ci;
  ci.lower = 1.5;
  auto c = combine(1.0, ci);
  EXPECT_EQ(c.source, CompositeSource::CiLower);
  EXPECT_EQ(c.value, 1.5);
  c = combine(2.0, ci);
  EXPECT_EQ(c.source, CompositeSource::Knn);
  EXPECT_EQ(c.value, 2.0);
  EXPECT_FALSE(c.warning);
  ci.lower = kInf;
  c = combine(2.0, ci);
  EXPECT_EQ(c.source, CompositeSource::Knn);
  EXPECT_TRUE(c.warning);
  ci.lower = 0.1;
  ci.degenerate = true;
  EXPECT_TRUE(combine(2.0, ci).warning);
}

TEST(Composite, LowInformationUsuallyKeepsKnn) {
  // I = ½ log(1 + 1/4) ≈ 0.11 nats; the lower limit rarely beats the k-NN value.
  const auto m = GenModel::bivariate_normal(1.0, 4.0, 1.0);
  const auto map = GaussianizingMap::known(input_law(m));
  Rng rng(14);
  int knn_wins = 0;
  const int reps = 40;
  for (int r = 0; r < reps; ++r) {
    const auto s = generate(m, 50, rng);
    BcaConfig bca;
    bca.replicates = 500;
    bca.seed = static_cast<std::uint64_t>(r);
    const auto rep = composite(s, map, {}, {}, bca);
    knn_wins += rep.composite.source == CompositeSource::Knn;
  }
  EXPECT_GT(knn_wins, reps / 2);
}
