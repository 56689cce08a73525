#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "forkjoin/bounds.hpp"
#include "forkjoin/combinatorics.hpp"
#include "forkjoin/metrics.hpp"
#include "forkjoin/simulator.hpp"

using namespace forkjoin;

namespace {

const ServiceDistribution kExp = ServiceDistribution::exponential(1.0);

double kolmogorov(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const auto n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace

TEST(WorkloadQueues, LazyDecayMatchesDenseIntegrator) {
  RandomStream rng(11, 0);
  const int n = 5;
  WorkloadQueues lazy(n);
  std::vector<double> dense(n, 0.0);
  double clock = 0.0;
  const double step = 1e-3;
  double t = 0.0;
  for (int job = 0; job < 1000; ++job) {
    t += rng.exponential(1.6);
    // Dense reference: decay every queue in steps of at most 1e-3.
    while (clock < t) {
      const double dt = std::min(step, t - clock);
      for (double& w : dense) w = std::max(0.0, w - dt);
      clock += dt;
    }
    clock = t;
    const int q = static_cast<int>(rng.below(n));
    const double s = rng.exponential(2.0);
    for (int i = 0; i < n; ++i) {
      ASSERT_NEAR(lazy.workload_at(i, t), dense[static_cast<std::size_t>(i)], 1e-9) << job;
      ASSERT_GE(lazy.workload_at(i, t), 0.0);
    }
    const double wait = lazy.admit(q, t, s);
    ASSERT_NEAR(wait, dense[static_cast<std::size_t>(q)], 1e-9);
    dense[static_cast<std::size_t>(q)] += s;
  }
}

TEST(SubsetSampler, DistinctQueuesAndFullFork) {
  RandomStream rng(3, 0);
  SubsetSampler s(10, 4);
  for (int i = 0; i < 10000; ++i) {
    const auto d = s.draw(rng);
    const std::set<int> u(d.begin(), d.end());
    ASSERT_EQ(u.size(), 4u);
    ASSERT_GE(*u.begin(), 0);
    ASSERT_LT(*u.rbegin(), 10);
  }
  SubsetSampler all(7, 7);
  for (int i = 0; i < 100; ++i) {
    const auto d = all.draw(rng);
    const std::set<int> u(d.begin(), d.end());
    ASSERT_EQ(u, (std::set<int>{0, 1, 2, 3, 4, 5, 6}));
  }
}

TEST(SubsetSampler, UniformOverPairs) {
  RandomStream rng(8, 0);
  SubsetSampler s(4, 2);
  std::map<std::pair<int, int>, int> counts;
  const int draws = 600000;
  for (int i = 0; i < draws; ++i) {
    const auto d = s.draw(rng);
    ++counts[{std::min(d[0], d[1]), std::max(d[0], d[1])}];
  }
  ASSERT_EQ(counts.size(), 6u);
  for (const auto& [pair, c] : counts) EXPECT_NEAR(c, draws / 6, 5 * std::sqrt(draws / 6.0));
}

TEST(SimulateForkJoin, FirstJobSeesEmptyQueues) {
  const SystemConfig cfg(8, 3, 0.5, kExp, 1, 0.0, 1);
  RandomStream rng(5, 0);
  const auto res = simulate_forkjoin(cfg, rng, {RecordLevel::full, false});
  ASSERT_EQ(res.records.size(), 1u);
  const auto& r = res.records[0];
  ASSERT_EQ(r.queues.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(r.task_delays[i], r.service_times[i]);
  EXPECT_EQ(r.job_delay, *std::max_element(r.service_times.begin(), r.service_times.end()));
}

TEST(SimulateForkJoin, FifoReplayAndMaxIdentity) {
  const SystemConfig cfg(12, 4, 0.6, ServiceDistribution::hyperexponential({0.9, 0.1}, {1.8, 0.2}), 1, 0.0, 20000);
  RandomStream rng(6, 0);
  const auto res = simulate_forkjoin(cfg, rng, {RecordLevel::full, true});
  ASSERT_EQ(res.records.size(), 20000u);
  // Reference FIFO: departure = max(arrival, previous departure) + service.
  std::vector<double> last_departure(12, 0.0);
  std::size_t task = 0;
  for (const auto& r : res.records) {
    double mx = 0.0;
    for (std::size_t i = 0; i < r.queues.size(); ++i) {
      double& dep = last_departure[static_cast<std::size_t>(r.queues[i])];
      dep = std::max(dep, r.arrival_time) + r.service_times[i];
      ASSERT_NEAR(r.task_delays[i], dep - r.arrival_time, 1e-9 * std::max(1.0, dep));
      ASSERT_GE(r.task_delays[i], r.service_times[i]);
      ASSERT_EQ(r.task_delays[i], res.task_delays[task++]);
      mx = std::max(mx, r.task_delays[i]);
    }
    ASSERT_EQ(r.job_delay, mx);
  }
  for (const double w : res.final_state.workloads) EXPECT_GE(w, 0.0);
}

TEST(SimulateForkJoin, ClassicForkJoinUsesEveryQueue) {
  const SystemConfig cfg(6, 6, 0.5, kExp, 1, 0.0, 500);
  RandomStream rng(1, 0);
  const auto res = simulate_forkjoin(cfg, rng, {RecordLevel::full, false});
  for (const auto& r : res.records) {
    std::vector<int> q = r.queues;
    std::sort(q.begin(), q.end());
    ASSERT_EQ(q, (std::vector<int>{0, 1, 2, 3, 4, 5}));
  }
}

TEST(SimulateForkJoin, SingleTaskJobsAreMM1) {
  const SystemConfig cfg(16, 1, 2.0 / 3.0, kExp, 1, 0.2, 1'250'000);
  RandomStream rng(1, 0);
  const auto res = simulate_forkjoin(cfg, rng);
  ASSERT_EQ(res.job_delays.size(), 1'000'000u);
  const auto m = estimate_mean(res.job_delays);
  EXPECT_NEAR(m.mean, 3.0, 0.06);
  EXPECT_FALSE(res.stationarity_warning);
}

TEST(SimulateForkJoin, SameStreamSameOutput) {
  const SystemConfig cfg(32, 5, 0.6, kExp, 1, 0.2, 5000);
  RandomStream a(9, 2), b(9, 2);
  EXPECT_EQ(simulate_forkjoin(cfg, a).job_delays, simulate_forkjoin(cfg, b).job_delays);
}

TEST(SimulateSingleQueue, DeterministicFloor) {
  RandomStream rng(2, 0);
  const auto d = simulate_single_queue(0.7, ServiceDistribution::deterministic(1.25), 100000, rng);
  for (const double x : d) ASSERT_GE(x, 1.25);
}

TEST(SimulateSingleQueue, MM1SojournLaw) {
  RandomStream rng(2, 1);
  const auto d = simulate_single_queue(2.0 / 3.0, kExp, 1'000'000, rng);
  EXPECT_LT(kolmogorov(d, [](double t) { return task_cdf_mm1(2.0 / 3.0, 1.0, t); }), 0.005);
}

TEST(SimulateSingleQueue, VanishingLoadLooksLikeService) {
  RandomStream rng(2, 2);
  const auto d = simulate_single_queue(1e-3, kExp, 1'000'000, rng);
  EXPECT_LT(kolmogorov(d, [](double t) { return -std::expm1(-t); }), 0.01);
}

TEST(SimulateSingleQueue, RejectsUnstable) {
  RandomStream rng(2, 3);
  EXPECT_THROW(simulate_single_queue(1.0, kExp, 10, rng), std::invalid_argument);
}

TEST(Coupling, SingleTaskNeverDiverges) {
  const SystemConfig cfg(8, 1, 0.6, kExp);
  RandomStream rng(4, 0);
  for (int i = 0; i < 2000; ++i) {
    const auto tr = simulate_coupled(cfg, 10.0, rng);
    ASSERT_FALSE(tr.diverged);
    ASSERT_FALSE(tr.first_block_differs);
  }
}

TEST(Coupling, FrequencyMatchesClosedForm) {
  const SystemConfig cfg(16, 4, 2.0 / 3.0, kExp);
  RandomStream rng(4, 1);
  const int runs = 100000;
  int diverged = 0, differs = 0;
  for (int i = 0; i < runs; ++i) {
    const auto tr = simulate_coupled(cfg, 5.0, rng);
    ASSERT_TRUE(tr.consistent);
    diverged += tr.diverged;
    differs += tr.first_block_differs;
    if (tr.diverged) {
      ASSERT_LE(*tr.first_divergence_time, 5.0);
    } else {
      ASSERT_EQ(tr.workloads, tr.coupled_workloads);
    }
  }
  const double freq = static_cast<double>(diverged) / runs;
  const double pe = pe_exact(16, 4, 8.0 / 3.0, 5.0);
  EXPECT_NEAR(freq, pe, 3 * std::sqrt(pe * (1 - pe) / runs));
  EXPECT_LE(differs, diverged);
}

TEST(PeExact, Examples) {
  EXPECT_EQ(pe_exact(16, 4, 8.0 / 3.0, 0.0), 0.0);
  for (const double tau : {0.5, 1.0, 3.0, 7.0})
    EXPECT_NEAR(pe_exact(4, 2, 1.3, tau), 1 - std::exp(-1.3 * tau / 6), 1e-15);
  EXPECT_THROW(pe_exact(4, 2, 1.0, -1.0), std::invalid_argument);
}

TEST(BusyPeriod, ExponentialMean) {
  RandomStream rng(7, 0);
  const auto r = busy_period_experiment(2.0 / 3.0, kExp, 100000, rng);
  EXPECT_NEAR(expected_busy_period(2.0 / 3.0, kExp), 6.0, 1e-12);
  EXPECT_NEAR(r.mean / 6.0, 1.0, 0.05);
  for (const auto& s : r.samples) ASSERT_GE(s.passage_time, s.inspection_workload);
}

TEST(BusyPeriod, DeterministicMean) {
  const auto d = ServiceDistribution::deterministic(1.0);
  RandomStream rng(7, 1);
  const auto r = busy_period_experiment(0.5, d, 100000, rng);
  EXPECT_NEAR(expected_busy_period(0.5, d), 1.0, 1e-12);
  EXPECT_NEAR(r.mean, 1.0, 0.05);
}

TEST(BusyPeriod, LightTraffic) {
  RandomStream rng(7, 2);
  const auto r = busy_period_experiment(1e-3, kExp, 1'000'000, rng);
  const double expected = expected_busy_period(1e-3, kExp);
  EXPECT_NEAR(expected, 1e-3, 1e-5);
  EXPECT_NEAR(r.mean, expected, 4 * r.standard_error);
  EXPECT_LT(r.standard_error / expected, 0.1);
  const auto empty = std::count_if(r.samples.begin(), r.samples.end(),
                                   [](const BusyPeriodSample& s) { return s.passage_time == 0.0; });
  EXPECT_GT(empty, 990'000);
}

TEST(QueueLengths, SingleQueueMarginalIsGeometric) {
  const SystemConfig cfg(16, 1, 2.0 / 3.0, kExp);
  RandomStream rng(12, 0);
  const auto snaps = sample_queue_lengths(cfg, 2.0, 1'000'000, 1, rng);
  ASSERT_EQ(snaps.count(), 1'000'000u);
  std::vector<double> pmf(200, 0.0);
  for (std::size_t s = 0; s < snaps.count(); ++s) pmf[std::min<std::size_t>(199, snaps.length(s, 0))] += 1e-6;
  const double rho = 2.0 / 3.0;
  double tv = 0.0, geo_rest = 1.0;
  for (int q = 0; q < 199; ++q) {
    const double g = (1 - rho) * std::pow(rho, q);
    tv += std::abs(pmf[static_cast<std::size_t>(q)] - g);
    geo_rest -= g;
  }
  tv = 0.5 * (tv + std::abs(pmf[199] - geo_rest));
  EXPECT_LT(tv, 0.01);
}

TEST(QueueLengths, VanishingLoadMostlyEmpty) {
  const SystemConfig cfg(16, 1, 1e-3, kExp);
  RandomStream rng(12, 1);
  const auto snaps = sample_queue_lengths(cfg, 2.0, 100000, 1, rng);
  std::size_t zero = 0;
  for (std::size_t s = 0; s < snaps.count(); ++s) zero += snaps.length(s, 0) == 0;
  EXPECT_GE(static_cast<double>(zero) / snaps.count(), 0.99);
}

TEST(QueueLengths, LengthsAndWorkloadsAgreeOnEmptiness) {
  const SystemConfig cfg(8, 4, 2.0 / 3.0, kExp);
  RandomStream rng(12, 2);
  const auto snaps = sample_queue_lengths(cfg, 2.0, 50000, 2, rng);
  for (std::size_t s = 0; s < snaps.count(); ++s)
    for (int q = 0; q < 2; ++q) ASSERT_EQ(snaps.length(s, q) == 0, snaps.workload(s, q) <= 0.0);
}

TEST(QueueLengths, RejectsNonExponential) {
  const SystemConfig cfg(8, 4, 0.5, ServiceDistribution::deterministic(1.0));
  RandomStream rng(1, 0);
  EXPECT_THROW(sample_queue_lengths(cfg, 2.0, 100, 2, rng), std::invalid_argument);
  const SystemConfig ok(8, 4, 0.5, kExp);
  EXPECT_THROW(sample_queue_lengths(ok, 2.0, 100, 9, rng), std::invalid_argument);
}

TEST(Dominance, SixtyFourByEightUnderBound) {
  const SystemConfig cfg(64, 8, 2.0 / 3.0, kExp);
  std::vector<double> delays;
  for (int r = 0; r < 20; ++r) {
    RandomStream rng(1, static_cast<std::uint64_t>(r));
    const auto res = simulate_forkjoin(cfg, rng);
    delays.insert(delays.end(), res.job_delays.begin(), res.job_delays.end());
  }
  const auto F = TaskDelayCdf::mm1(2.0 / 3.0, 1.0);
  const auto ccdf = estimate_ccdf(delays, ccdf_grid(F, 8));
  for (std::size_t i = 0; i < ccdf.grid.size(); ++i)
    ASSERT_LE(ccdf.survival[i], independence_ccdf(F, 8, ccdf.grid[i]) + 3 * ccdf.ci_halfwidth[i]) << ccdf.grid[i];
}

TEST(Dominance, HoldsForNonExponentialService) {
  for (const auto& service : {ServiceDistribution::deterministic(1.0),
                              ServiceDistribution::hyperexponential({0.9, 0.1}, {1.8, 0.2})}) {
    const double lambda = 0.6;
    const SystemConfig cfg(32, 4, lambda, service, 1, 0.2, 100000);
    std::vector<double> delays;
    for (int r = 0; r < 10; ++r) {
      RandomStream rng(2, static_cast<std::uint64_t>(r));
      const auto res = simulate_forkjoin(cfg, rng);
      delays.insert(delays.end(), res.job_delays.begin(), res.job_delays.end());
    }
    RandomStream aux(2, 99);
    const auto F = TaskDelayCdf::empirical(simulate_single_queue(lambda, service, 1'000'000, aux));
    const auto ccdf = estimate_ccdf(delays, ccdf_grid(F, 4));
    for (std::size_t i = 0; i < ccdf.grid.size(); ++i)
      ASSERT_LE(ccdf.survival[i], independence_ccdf(F, 4, ccdf.grid[i]) + 3 * ccdf.ci_halfwidth[i])
          << service.name() << " " << ccdf.grid[i];
  }
}
