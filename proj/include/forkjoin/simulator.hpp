#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "forkjoin/combinatorics.hpp"
#include "forkjoin/random.hpp"
#include "forkjoin/service.hpp"
#include "forkjoin/system_config.hpp"

namespace forkjoin {

struct WorkloadState {
  double now = 0.0;
  std::vector<double> workloads;
};

struct JobRecord {
  double arrival_time = 0.0;
  std::vector<int> queues;  // 0-based, in draw order
  std::vector<double> service_times;
  std::vector<double> task_delays;
  double job_delay = 0.0;
};

// Remaining work per FIFO queue, decayed lazily. Each queue stores the
// workload right after its last arrival and the time of that arrival; between
// arrivals work drains at rate 1, so nothing happens at departures.
class WorkloadQueues {
 public:
  explicit WorkloadQueues(int n) : work_(static_cast<std::size_t>(n), 0.0), stamp_(work_.size(), 0.0) {}

  int size() const { return static_cast<int>(work_.size()); }

  double workload_at(int q, double t) const {
    const auto i = static_cast<std::size_t>(q);
    return std::max(0.0, work_[i] - (t - stamp_[i]));
  }

  // Admits a task at time t and returns its waiting time.
  double admit(int q, double t, double service) {
    const auto i = static_cast<std::size_t>(q);
    const double wait = workload_at(q, t);
    work_[i] = wait + service;
    stamp_[i] = t;
    return wait;
  }

  WorkloadState snapshot(double t) const {
    WorkloadState s{t, std::vector<double>(work_.size())};
    for (int q = 0; q < size(); ++q) s.workloads[static_cast<std::size_t>(q)] = workload_at(q, t);
    return s;
  }

  bool same_queue_state(const WorkloadQueues& other, int first_count) const {
    for (std::size_t i = 0; i < static_cast<std::size_t>(first_count); ++i)
      if (work_[i] != other.work_[i] || stamp_[i] != other.stamp_[i]) return false;
    return true;
  }

 private:
  std::vector<double> work_;
  std::vector<double> stamp_;
};

// Uniform k-subsets of {0..n-1} by partial Fisher-Yates over a persistent pool.
class SubsetSampler {
 public:
  SubsetSampler(int n, int k) : pool_(static_cast<std::size_t>(n)), k_(k) {
    std::iota(pool_.begin(), pool_.end(), 0);
  }

  std::span<const int> draw(RandomStream& rng) {
    const auto n = pool_.size();
    for (std::size_t j = 0; j < static_cast<std::size_t>(k_); ++j) {
      const auto r = j + static_cast<std::size_t>(rng.below(n - j));
      std::swap(pool_[j], pool_[r]);
    }
    return {pool_.data(), static_cast<std::size_t>(k_)};
  }

 private:
  std::vector<int> pool_;
  int k_;
};

enum class RecordLevel { delays, full };

struct SimulationOptions {
  RecordLevel level = RecordLevel::delays;
  bool collect_task_delays = false;
};

struct ForkJoinResult {
  std::vector<double> job_delays;  // post-warmup, arrival order
  std::vector<JobRecord> records;  // only with RecordLevel::full
  std::vector<double> task_delays;  // only with collect_task_delays
  WorkloadState final_state;
  std::uint64_t jobs_simulated = 0;
  bool stationarity_warning = false;
};

namespace detail {

// Mean and batch-means standard error of a contiguous sequence.
inline std::pair<double, double> batch_mean_se(std::span<const double> xs, std::size_t batches) {
  const std::size_t per = xs.size() / batches;
  if (per == 0) return {0.0, 0.0};
  std::vector<double> means(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    const auto first = xs.begin() + static_cast<std::ptrdiff_t>(b * per);
    means[b] = std::accumulate(first, first + static_cast<std::ptrdiff_t>(per), 0.0) /
               static_cast<double>(per);
  }
  const double mean = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(batches);
  double ss = 0.0;
  for (double m : means) ss += (m - mean) * (m - mean);
  const double var = ss / static_cast<double>(batches - 1);
  return {mean, std::sqrt(var / static_cast<double>(batches))};
}

// Compares the second and fourth quarters of a sequence; true when their means
// differ by more than three pooled standard errors.
inline bool nonstationary(std::span<const double> xs) {
  const std::size_t q = xs.size() / 4;
  if (q < 100) return false;
  const auto [m2, s2] = batch_mean_se(xs.subspan(q, q), 10);
  const auto [m4, s4] = batch_mean_se(xs.subspan(3 * q, q), 10);
  return std::abs(m2 - m4) > 3.0 * std::sqrt(s2 * s2 + s4 * s4);
}

inline void require_stable(double lambda, const ServiceDistribution& service) {
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  const double rho = lambda * service.mean();
  if (!(rho < 1.0))
    throw ConfigError("unstable queue: rho = " + std::to_string(rho) + " must be < 1");
}

}  // namespace detail

// Simulates config.horizon_jobs() jobs of the n-queue limited fork-join system
// from empty queues. Jobs arriving among the first warmup_jobs() shape the
// state but are not recorded.
inline ForkJoinResult simulate_forkjoin(const SystemConfig& config, RandomStream& rng,
                                        const SimulationOptions& options = {}) {
  const int n = config.n();
  const int k = config.k();
  const double job_rate = config.job_rate();
  const ServiceDistribution& service = config.service();
  const std::uint64_t warmup = config.warmup_jobs();
  const std::uint64_t total = config.horizon_jobs();

  WorkloadQueues queues(n);
  SubsetSampler sampler(n, k);
  ForkJoinResult result;
  result.job_delays.reserve(total - warmup);
  if (options.collect_task_delays)
    result.task_delays.reserve((total - warmup) * static_cast<std::uint64_t>(k));

  double t = 0.0;
  for (std::uint64_t j = 0; j < total; ++j) {
    t += rng.exponential(job_rate);
    const auto subset = sampler.draw(rng);
    const bool keep = j >= warmup;
    const bool full = keep && options.level == RecordLevel::full;
    JobRecord record;
    if (full) {
      record.arrival_time = t;
      record.queues.assign(subset.begin(), subset.end());
      record.service_times.reserve(subset.size());
      record.task_delays.reserve(subset.size());
    }
    double job_delay = 0.0;
    for (const int q : subset) {
      const double s = service.sample(rng);
      const double delay = queues.admit(q, t, s) + s;
      job_delay = std::max(job_delay, delay);
      if (keep && options.collect_task_delays) result.task_delays.push_back(delay);
      if (full) {
        record.service_times.push_back(s);
        record.task_delays.push_back(delay);
      }
    }
    if (keep) {
      result.job_delays.push_back(job_delay);
      if (full) {
        record.job_delay = job_delay;
        result.records.push_back(std::move(record));
      }
    }
  }
  result.jobs_simulated = total;
  result.final_state = queues.snapshot(t);
  result.stationarity_warning = detail::nonstationary(result.job_delays);
  return result;
}

// Sojourn times of one isolated M/G/1 FIFO queue via the Lindley recursion.
// Returns num_samples post-warmup delays.
inline std::vector<double> simulate_single_queue(double lambda, const ServiceDistribution& service,
                                                 std::uint64_t num_samples, RandomStream& rng,
                                                 std::optional<std::uint64_t> warmup_jobs = {}) {
  detail::require_stable(lambda, service);
  const std::uint64_t warmup = warmup_jobs.value_or(num_samples / 4);
  std::vector<double> delays;
  delays.reserve(num_samples);
  double workload = 0.0;
  for (std::uint64_t j = 0; j < warmup + num_samples; ++j) {
    workload = std::max(0.0, workload - rng.exponential(lambda));
    const double s = service.sample(rng);
    const double delay = workload + s;
    workload = delay;
    if (j >= warmup) delays.push_back(delay);
  }
  return delays;
}

// Outcome of running S and its thinned twin side by side up to a horizon.
struct CouplingTrace {
  double horizon = 0.0;
  bool diverged = false;  // some job hit >= 2 of queues 1..k
  std::optional<double> first_divergence_time;
  std::uint64_t killed_tasks = 0;
  std::uint64_t jobs = 0;
  bool first_block_differs = false;  // first-k workloads differ at the horizon
  bool consistent = true;            // first-k states were bitwise equal before divergence
  std::vector<double> workloads;         // first k, system S, at horizon
  std::vector<double> coupled_workloads;  // first k, twin system, at horizon
};

// Runs the original system and the coupled system in which a job selecting
// m >= 2 of queues 1..k keeps one of those tasks (uniformly chosen) and drops
// the other m - 1. Both systems share arrivals and per-queue service times.
// Per job draw order: gap, subset, service times, then the kept index (only
// when m >= 2).
inline CouplingTrace simulate_coupled(const SystemConfig& config, double horizon,
                                      RandomStream& rng) {
  if (!(horizon > 0.0)) throw std::invalid_argument("simulate_coupled: horizon must be positive");
  const int n = config.n();
  const int k = config.k();
  const double job_rate = config.job_rate();
  const ServiceDistribution& service = config.service();

  WorkloadQueues original(n);
  WorkloadQueues twin(n);
  SubsetSampler sampler(n, k);
  std::vector<double> services(static_cast<std::size_t>(k));
  std::vector<int> block_positions;
  block_positions.reserve(static_cast<std::size_t>(k));

  CouplingTrace trace;
  trace.horizon = horizon;
  double t = 0.0;
  while (true) {
    t += rng.exponential(job_rate);
    if (t > horizon) break;
    ++trace.jobs;
    const auto subset = sampler.draw(rng);
    block_positions.clear();
    for (std::size_t i = 0; i < subset.size(); ++i) {
      services[i] = service.sample(rng);
      if (subset[i] < k) block_positions.push_back(static_cast<int>(i));
    }
    std::optional<std::size_t> kept;
    const std::size_t m = block_positions.size();
    if (m >= 2) {
      kept = static_cast<std::size_t>(block_positions[rng.below(m)]);
      trace.killed_tasks += m - 1;
      if (!trace.diverged) {
        trace.diverged = true;
        trace.first_divergence_time = t;
      }
    }
    for (std::size_t i = 0; i < subset.size(); ++i) {
      original.admit(subset[i], t, services[i]);
      const bool in_block = subset[i] < k;
      if (!kept || !in_block || i == *kept) twin.admit(subset[i], t, services[i]);
    }
    if (!trace.diverged && !original.same_queue_state(twin, k)) trace.consistent = false;
  }
  trace.workloads.resize(static_cast<std::size_t>(k));
  trace.coupled_workloads.resize(static_cast<std::size_t>(k));
  for (int q = 0; q < k; ++q) {
    const auto i = static_cast<std::size_t>(q);
    trace.workloads[i] = original.workload_at(q, horizon);
    trace.coupled_workloads[i] = twin.workload_at(q, horizon);
    if (trace.workloads[i] != trace.coupled_workloads[i]) trace.first_block_differs = true;
  }
  if (!trace.diverged && trace.first_block_differs) trace.consistent = false;
  return trace;
}

// Probability that some job in [0, tau] selects >= 2 of queues 1..k:
// 1 - exp(-Lambda tau (1 - p)), p = p_select_le1(n, k).
inline double pe_exact(int n, int k, double job_rate, double tau) {
  if (tau < 0.0) throw std::invalid_argument("pe_exact: tau must be nonnegative");
  const double p = p_select_le1(CombinatorialContext::for_system(n, k));
  return -std::expm1(-job_rate * tau * (1.0 - p));
}

struct BusyPeriodSample {
  double inspection_workload = 0.0;
  double passage_time = 0.0;
};

struct BusyPeriodResult {
  std::vector<BusyPeriodSample> samples;
  double mean = 0.0;
  double standard_error = 0.0;
  double warmup_time = 0.0;
};

// lambda g2 / (2 (1 - rho)^2): mean time for an M/G/1 queue to first empty,
// starting from its stationary workload.
inline double expected_busy_period(double lambda, const ServiceDistribution& service) {
  const double rho = lambda * service.mean();
  return lambda * service.second_moment() / (2.0 * (1.0 - rho) * (1.0 - rho));
}

// A warm-up window of many relaxation times of the M/G/1 workload.
inline double default_relaxation_window(double lambda, const ServiceDistribution& service) {
  const double rho = lambda * service.mean();
  const double relax = service.mean() / ((1.0 - std::sqrt(rho)) * (1.0 - std::sqrt(rho)));
  return std::max(10.0 * relax, 20.0 * service.mean());
}

// Each sample starts an empty queue, runs it for warmup_time, inspects the
// workload at that epoch and measures the time, arrivals continuing, until
// the queue first empties.
inline BusyPeriodResult busy_period_experiment(double lambda, const ServiceDistribution& service,
                                               std::uint64_t num_samples, RandomStream& rng,
                                               std::optional<double> warmup_time = {}) {
  detail::require_stable(lambda, service);
  BusyPeriodResult result;
  result.warmup_time = warmup_time.value_or(default_relaxation_window(lambda, service));
  const double inspect = result.warmup_time;
  result.samples.reserve(num_samples);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::uint64_t s = 0; s < num_samples; ++s) {
    double t = 0.0;
    double work = 0.0;
    double next = rng.exponential(lambda);
    while (next <= inspect) {
      work = std::max(0.0, work - (next - t)) + service.sample(rng);
      t = next;
      next += rng.exponential(lambda);
    }
    work = std::max(0.0, work - (inspect - t));
    BusyPeriodSample sample{work, 0.0};
    double elapsed = 0.0;
    double gap = next - inspect;
    while (work > gap) {
      work -= gap;
      elapsed += gap;
      work += service.sample(rng);
      gap = rng.exponential(lambda);
    }
    sample.passage_time = elapsed + work;
    sum += sample.passage_time;
    sum_sq += sample.passage_time * sample.passage_time;
    result.samples.push_back(sample);
  }
  const auto count = static_cast<double>(num_samples);
  result.mean = sum / count;
  if (num_samples > 1)
    result.standard_error =
        std::sqrt(std::max(0.0, sum_sq / count - result.mean * result.mean) / (count - 1.0));
  return result;
}

// Fixed-interval snapshots of the first m queues: queue lengths (tasks present,
// including the one in service) and workloads, row-major with stride m.
struct QueueSnapshots {
  int m = 0;
  double interval = 0.0;
  std::vector<std::uint32_t> lengths;
  std::vector<double> workloads;

  std::size_t count() const { return m == 0 ? 0 : lengths.size() / static_cast<std::size_t>(m); }
  std::uint32_t length(std::size_t snapshot, int queue) const {
    return lengths[snapshot * static_cast<std::size_t>(m) + static_cast<std::size_t>(queue)];
  }
  double workload(std::size_t snapshot, int queue) const {
    return workloads[snapshot * static_cast<std::size_t>(m) + static_cast<std::size_t>(queue)];
  }
};

// Snapshots the first m queues every `interval` time units after a warm-up of
// warmup_fraction of the total observed span. Queues beyond m never influence
// queues 1..m, so their service times are not drawn.
inline QueueSnapshots sample_first_queues(const SystemConfig& config, double interval,
                                          std::uint64_t num_samples, int m, RandomStream& rng) {
  if (!(interval > 0.0)) throw std::invalid_argument("snapshot interval must be positive");
  if (m < 1 || m > config.n())
    throw std::invalid_argument("snapshot width m must satisfy 1 <= m <= n");
  const double wf = config.warmup_fraction();
  const double span = interval * static_cast<double>(num_samples);
  const double warmup = wf / (1.0 - wf) * span;

  WorkloadQueues queues(config.n());
  SubsetSampler sampler(config.n(), config.k());
  std::vector<std::deque<double>> departures(static_cast<std::size_t>(m));
  QueueSnapshots out;
  out.m = m;
  out.interval = interval;
  out.lengths.reserve(num_samples * static_cast<std::size_t>(m));
  out.workloads.reserve(num_samples * static_cast<std::size_t>(m));

  double next_snapshot = warmup + interval;
  std::uint64_t taken = 0;
  double t = 0.0;
  const double job_rate = config.job_rate();
  while (taken < num_samples) {
    t += rng.exponential(job_rate);
    while (taken < num_samples && next_snapshot < t) {
      for (int q = 0; q < m; ++q) {
        auto& dq = departures[static_cast<std::size_t>(q)];
        while (!dq.empty() && dq.front() <= next_snapshot) dq.pop_front();
        out.lengths.push_back(static_cast<std::uint32_t>(dq.size()));
        out.workloads.push_back(queues.workload_at(q, next_snapshot));
      }
      ++taken;
      next_snapshot += interval;
    }
    for (const int q : sampler.draw(rng)) {
      if (q >= m) continue;
      const double s = config.service().sample(rng);
      const double wait = queues.admit(q, t, s);
      departures[static_cast<std::size_t>(q)].push_back(t + wait + s);
    }
  }
  return out;
}

// Queue-length snapshots; only meaningful as a Markov state for exponential service.
inline QueueSnapshots sample_queue_lengths(const SystemConfig& config, double interval,
                                           std::uint64_t num_samples, int m, RandomStream& rng) {
  if (!config.service().is_exponential())
    throw std::invalid_argument(
        "sample_queue_lengths requires exponential service (queue length is not a Markov "
        "state under " + config.service().name() + " service)");
  return sample_first_queues(config, interval, num_samples, m, rng);
}

}  // namespace forkjoin
