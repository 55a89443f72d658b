#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/digamma.hpp>

#include <set>

#include "nubound/rng.hpp"
#include "nubound/special.hpp"
#include "test_util.hpp"

using namespace nubound;

TEST(NormalFunctions, QuantileMatchesBoost) {
  const boost::math::normal_distribution<double> n01;
  for (double p : {1e-15, 1e-10, 1e-6, 0.001, 0.025, 0.1, 0.3, 0.5, 0.7, 0.9, 0.975, 0.999, 1 - 1e-6, 1 - 1e-12}) {
    const double expected = boost::math::quantile(n01, p);
    EXPECT_NEAR(normal_quantile(p), expected, 1e-9 * std::max(1.0, std::fabs(expected))) << "p=" << p;
  }
}

TEST(NormalFunctions, CdfAndSurvivalMatchBoost) {
  const boost::math::normal_distribution<double> n01;
  for (double x = -30.0; x <= 30.0; x += 0.37) {
    const double cdf = boost::math::cdf(n01, x);
    const double sf = boost::math::cdf(boost::math::complement(n01, x));
    EXPECT_NEAR(normal_cdf(x), cdf, 1e-14 * std::max(cdf, 1e-300) + 1e-300);
    EXPECT_NEAR(normal_sf(x), sf, 1e-13 * sf + 1e-300);
    EXPECT_NEAR(normal_pdf(x), boost::math::pdf(n01, x), 1e-15);
  }
}

TEST(NormalFunctions, QuantileInvertsCdf) {
  // Lower tail through the cdf, upper tail through the survival function.
  for (double x = -8.0; x <= 0.0; x += 0.25) {
    EXPECT_NEAR(normal_quantile(normal_cdf(x)), x, 1e-8);
    EXPECT_NEAR(normal_quantile(normal_sf(-x)), x, 1e-8);
  }
}

TEST(NormalFunctions, LogPdf) {
  EXPECT_NEAR(normal_log_pdf(1.0, 0.0, 1.0), std::log(normal_pdf(1.0)), 1e-14);
  EXPECT_NEAR(normal_log_pdf(3.0, 1.0, 4.0), std::log(normal_pdf(1.0) / 2.0), 1e-14);
}

TEST(Digamma, MatchesBoostToTenDigits) {
  for (double x : {1e-3, 0.1, 0.5, 1.0, 1.5, 2.0, 3.0, 5.5, 6.0, 7.25, 10.0, 25.0, 100.0, 1e4, 1e6}) {
    EXPECT_NEAR(digamma(x), boost::math::digamma(x), 1e-10) << "x=" << x;
  }
}

TEST(Digamma, IntegerValuesFromHarmonicNumbers) {
  const double euler = 0.57721566490153286;
  double harmonic = 0.0;
  for (int n = 1; n <= 50; ++n) {
    EXPECT_NEAR(digamma(n), harmonic - euler, 1e-12);
    harmonic += 1.0 / n;
  }
}

TEST(LogSumExp, StableForLargeArguments) {
  EXPECT_NEAR(log_sum_exp(1000.0, 1000.0), 1000.0 + std::log(2.0), 1e-12);
  EXPECT_NEAR(log_sum_exp(std::log(2.0), std::log(3.0)), std::log(5.0), 1e-15);
  EXPECT_EQ(log_sum_exp(-HUGE_VAL, -HUGE_VAL), -HUGE_VAL);
}

TEST(GaussHermite, ExactForPolynomialMoments) {
  const GaussHermite gh(20);
  EXPECT_NEAR(gh.expect([](double y) { return 1.0; }, 0.3, 2.0), 1.0, 1e-13);
  EXPECT_NEAR(gh.expect([](double y) { return y; }, 0.3, 2.0), 0.3, 1e-13);
  EXPECT_NEAR(gh.expect([](double y) { return y * y; }, 0.3, 2.0), 2.0 + 0.09, 1e-12);
  // Fourth central moment 3σ⁴.
  EXPECT_NEAR(gh.expect([](double y) { return std::pow(y - 1.0, 4); }, 1.0, 0.5), 3.0 * 0.25, 1e-12);
}

TEST(GaussHermite, SmoothExpectation) {
  // E[cos Y] = exp(−σ²/2) cos μ.
  const GaussHermite gh(40);
  EXPECT_NEAR(gh.expect([](double y) { return std::cos(y); }, 0.7, 1.3), std::exp(-0.65) * std::cos(0.7), 1e-12);
}

TEST(Units, BitsAndNats) {
  EXPECT_NEAR(nats_to_bits(std::log(2.0)), 1.0, 1e-15);
  EXPECT_NEAR(bits_to_nats(nats_to_bits(0.8305)), 0.8305, 1e-15);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_EQ(a.uniform(), b.uniform());
    ASSERT_EQ(a.normal(), b.normal());
    ASSERT_EQ(a.index(17), b.index(17));
  }
}

TEST(Rng, UniformOpenInterval) {
  Rng r(1);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(hi, 1.0);
  EXPECT_NEAR(sum / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST(Rng, NormalMoments) {
  Rng r(7);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal(2.0, 3.0);
    s += v;
    s2 += v * v;
  }
  const double mean = s / n;
  EXPECT_NEAR(mean, 2.0, 4.0 * 3.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n - mean * mean, 9.0, 9.0 * 6.0 * std::sqrt(2.0 / n));
}

TEST(Rng, IndexIsUniform) {
  Rng r(3);
  const int n = 7, draws = 70000;
  std::vector<int> counts(n, 0);
  for (int i = 0; i < draws; ++i) ++counts[r.index(n)];
  const double expected = static_cast<double>(draws) / n;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 22.46);  // chi-square(6) upper 0.1% point
}

TEST(Rng, DerivedSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 100; ++a) {
    for (std::uint64_t b = 0; b < 100; ++b) seen.insert(derive_seed(11, a, b));
  }
  EXPECT_EQ(seen.size(), 10000u);
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 1));
}
