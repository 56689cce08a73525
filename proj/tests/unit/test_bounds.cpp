#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "forkjoin/bounds.hpp"
#include "forkjoin/random.hpp"
#include "forkjoin/simulator.hpp"

using namespace forkjoin;

TEST(TaskCdfMM1, Examples) {
  EXPECT_EQ(task_cdf_mm1(2.0 / 3.0, 1.0, 0.0), 0.0);
  EXPECT_NEAR(task_cdf_mm1(2.0 / 3.0, 1.0, 3.0), 1 - std::exp(-1.0), 1e-15);
  EXPECT_NEAR(task_cdf_mm1(2.0 / 3.0, 1.0, 3.0), 0.63212, 1e-5);
  EXPECT_THROW(task_cdf_mm1(1.0, 1.0, 1.0), std::invalid_argument);
}

TEST(TaskCdfMM1, MatchesSimulatedQueue) {
  RandomStream rng(21, 0);
  std::vector<double> d = simulate_single_queue(2.0 / 3.0, ServiceDistribution::exponential(1.0), 1'000'000, rng);
  std::sort(d.begin(), d.end());
  double ks = 0.0;
  const auto n = static_cast<double>(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double f = task_cdf_mm1(2.0 / 3.0, 1.0, d[i]);
    ks = std::max({ks, (i + 1) / n - f, f - i / n});
  }
  EXPECT_LT(ks, 0.005);
}

TEST(TaskDelayCdf, ShapeAndQuantile) {
  const auto F = TaskDelayCdf::mm1(2.0 / 3.0, 1.0);
  EXPECT_EQ(F(-1.0), 0.0);
  EXPECT_EQ(F(0.0), 0.0);
  EXPECT_NEAR(F(1e6), 1.0, 1e-15);
  double prev = 0.0;
  for (double t = 0.0; t < 60.0; t += 0.05) {
    ASSERT_GE(F(t), prev);
    prev = F(t);
  }
  for (const double u : {0.01, 0.5, 0.99}) EXPECT_NEAR(F(F.quantile(u)), u, 1e-12);
  const auto E = TaskDelayCdf::empirical({3.0, 1.0, 2.0, 4.0});
  EXPECT_EQ(E(0.5), 0.0);
  EXPECT_EQ(E(2.0), 0.5);
  EXPECT_EQ(E(10.0), 1.0);
  EXPECT_EQ(E.quantile(0.5), 2.0);
  EXPECT_EQ(E.quantile(0.51), 3.0);
}

TEST(IndependenceCcdf, Examples) {
  const auto F = TaskDelayCdf::mm1(2.0 / 3.0, 1.0);
  for (const double t : {0.1, 1.0, 3.0, 10.0}) EXPECT_NEAR(independence_ccdf(F, 1, t), 1 - F(t), 1e-15);
  const double f = 1 - std::exp(-1.0);
  EXPECT_NEAR(independence_ccdf(F, 4, 3.0), 1 - std::pow(f, 4), 1e-15);
  EXPECT_NEAR(independence_ccdf(F, 4, 3.0), 0.8403, 1e-4);
  const auto point = TaskDelayCdf::empirical({1.0, 1.0});
  EXPECT_EQ(independence_ccdf(point, 7, 2.0), 0.0);
}

TEST(IndependenceCcdf, MonotoneAndUnionBound) {
  const auto F = TaskDelayCdf::mm1(2.0 / 3.0, 1.0);
  for (const int k : {1, 2, 8, 64, 1024}) {
    double prev = 1.0;
    for (double t = 0.0; t < 100.0; t += 0.1) {
      const double c = independence_ccdf(F, k, t);
      ASSERT_LE(c, prev);
      ASSERT_LE(c, k * (1 - F(t)) * (1 + 1e-12));
      prev = c;
    }
  }
}

TEST(Harmonic, Values) {
  EXPECT_EQ(harmonic(1), 1.0);
  EXPECT_NEAR(harmonic(4), 25.0 / 12.0, 1e-15);
  const double m = 1e6;
  const double em = std::log(m) + 0.57721566490153286061 + 1 / (2 * m) - 1 / (12 * m * m);
  EXPECT_NEAR(harmonic(1'000'000), em, 1e-10);
  EXPECT_THROW(harmonic(0), std::invalid_argument);
}

TEST(AsymptoticMean, ClosedFormValues) {
  EXPECT_NEAR(asymptotic_mean_mm1(1, 2.0 / 3.0, 1.0), 3.0, 1e-14);
  EXPECT_NEAR(asymptotic_mean_mm1(4, 2.0 / 3.0, 1.0), 6.25, 1e-14);
}

TEST(AsymptoticMean, MaxOfEightExponentials) {
  RandomStream rng(31, 0);
  const int trials = 1'000'000;
  double sum = 0.0;
  for (int i = 0; i < trials; ++i) {
    double mx = 0.0;
    for (int j = 0; j < 8; ++j) mx = std::max(mx, rng.exponential(1.0 / 3.0));
    sum += mx;
  }
  EXPECT_NEAR(sum / trials / asymptotic_mean_mm1(8, 2.0 / 3.0, 1.0), 1.0, 0.01);
}

TEST(AsymptoticMean, IntegratedSurvivalMatches) {
  const auto F = TaskDelayCdf::mm1(2.0 / 3.0, 1.0);
  boost::math::quadrature::exp_sinh<double> integrator;
  for (const int k : {1, 3, 8, 11, 100, 512}) {
    const double integral = integrator.integrate([&](double t) { return independence_ccdf(F, k, t); }, 0.0,
                                                 std::numeric_limits<double>::infinity());
    const double mean = asymptotic_mean_mm1(k, 2.0 / 3.0, 1.0);
    EXPECT_NEAR(integral / mean, 1.0, 1e-6) << k;
    EXPECT_NEAR(independence_mean(F, k), mean, 1e-12 * mean);
  }
}

TEST(EmpiricalBound, MatchesAnalyticOnGrid) {
  RandomStream rng(33, 0);
  const auto E = TaskDelayCdf::empirical(
      simulate_single_queue(2.0 / 3.0, ServiceDistribution::exponential(1.0), 1'000'000, rng));
  const auto A = TaskDelayCdf::mm1(2.0 / 3.0, 1.0);
  for (const int k : {1, 4, 16}) {
    for (const double t : ccdf_grid(A, k))
      ASSERT_NEAR(independence_ccdf(E, k, t), independence_ccdf(A, k, t), 0.01) << k << " " << t;
    EXPECT_NEAR(independence_mean(E, k) / independence_mean(A, k), 1.0, 0.02);
  }
}

TEST(CcdfGrid, SpansBodyAndTail) {
  const auto F = TaskDelayCdf::mm1(2.0 / 3.0, 1.0);
  const auto g = ccdf_grid(F, 8);
  ASSERT_EQ(g.size(), 200u);
  EXPECT_NEAR(F(g.front()), 0.01, 1e-12);
  EXPECT_NEAR(independence_ccdf(F, 8, g.back()), 1e-4, 1e-10);
  for (std::size_t i = 1; i < g.size(); ++i) {
    ASSERT_GT(g[i], g[i - 1]);
    if (i > 1) {
      ASSERT_NEAR(g[i] / g[i - 1], g[1] / g[0], 1e-9);
    }
  }
}
