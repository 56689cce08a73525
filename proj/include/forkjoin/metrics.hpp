#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "forkjoin/combinatorics.hpp"
#include "forkjoin/simulator.hpp"

namespace forkjoin {

// Two-sided 99% standard normal quantile.
inline constexpr double kZ99 = 2.5758293035489004;
inline constexpr std::size_t kDefaultBatches = 30;

// Empirical survival P(T > tau) on a grid, with batch-means 99% half-widths.
struct CcdfEstimate {
  std::vector<double> grid;
  std::vector<double> survival;
  std::vector<double> ci_halfwidth;
  std::size_t sample_count = 0;

  double max_halfwidth() const {
    return ci_halfwidth.empty() ? 0.0 : *std::max_element(ci_halfwidth.begin(), ci_halfwidth.end());
  }
};

namespace detail {

// Fraction of sorted samples strictly above each grid point.
inline std::vector<double> survival_on_grid(std::vector<double> xs, std::span<const double> grid) {
  std::sort(xs.begin(), xs.end());
  std::vector<double> out(grid.size());
  const auto total = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto it = std::upper_bound(xs.begin(), xs.end(), grid[i]);
    out[i] = static_cast<double>(xs.end() - it) / total;
  }
  return out;
}

inline double sample_sd(std::span<const double> xs) {
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace detail

// Samples are taken in generation order; CIs come from `batches` contiguous
// batch estimates, so serial correlation inside a batch is accounted for.
inline CcdfEstimate estimate_ccdf(std::span<const double> delays, std::span<const double> grid,
                                  std::size_t batches = kDefaultBatches) {
  if (delays.size() < 1000)
    throw std::invalid_argument("estimate_ccdf: need at least 1000 samples, got " +
                                std::to_string(delays.size()));
  if (grid.empty()) throw std::invalid_argument("estimate_ccdf: empty grid");
  if (!std::is_sorted(grid.begin(), grid.end()))
    throw std::invalid_argument("estimate_ccdf: grid must be sorted");
  if (batches < 2) throw std::invalid_argument("estimate_ccdf: need at least two batches");

  CcdfEstimate est;
  est.grid.assign(grid.begin(), grid.end());
  est.sample_count = delays.size();
  est.survival = detail::survival_on_grid({delays.begin(), delays.end()}, grid);

  const std::size_t per = delays.size() / batches;
  std::vector<std::vector<double>> batch_surv;
  batch_surv.reserve(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    const auto first = delays.begin() + static_cast<std::ptrdiff_t>(b * per);
    batch_surv.push_back(detail::survival_on_grid({first, first + static_cast<std::ptrdiff_t>(per)}, grid));
  }
  est.ci_halfwidth.resize(grid.size());
  std::vector<double> column(batches);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (std::size_t b = 0; b < batches; ++b) column[b] = batch_surv[b][i];
    const double batched = kZ99 * detail::sample_sd(column) / std::sqrt(static_cast<double>(batches));
    // Batch means collapse to zero width when no batch sees an exceedance (or all do);
    // floor at the iid binomial width with the Agresti-Coull adjusted proportion.
    const double count = static_cast<double>(delays.size());
    const double adjusted = (est.survival[i] * count + kZ99 * kZ99 / 2) / (count + kZ99 * kZ99);
    const double binomial = kZ99 * std::sqrt(adjusted * (1 - adjusted) / (count + kZ99 * kZ99));
    est.ci_halfwidth[i] = std::max(batched, binomial);
  }
  return est;
}

struct SupDistance {
  double max_abs_gap = 0.0;       // sup |empirical - bound| over the grid
  double max_signed_excess = 0.0;  // sup (empirical - bound); > 0 means above the bound somewhere
  double tau_at_max_gap = 0.0;
  // sup (empirical - bound - 3 half-widths); <= 0 means dominated within CI.
  double max_excess_over_ci = 0.0;
};

// Survival and cdf gaps coincide, so this is also sup |P(T <= tau) - P(T^ <= tau)| on the grid.
inline SupDistance sup_distance(const CcdfEstimate& ccdf, const std::function<double(double)>& bound) {
  if (ccdf.grid.empty()) throw std::invalid_argument("sup_distance: empty grid");
  SupDistance d;
  d.max_signed_excess = -1.0;
  d.max_excess_over_ci = -1.0;
  for (std::size_t i = 0; i < ccdf.grid.size(); ++i) {
    const double b = bound(ccdf.grid[i]);
    const double diff = ccdf.survival[i] - b;
    if (std::abs(diff) > d.max_abs_gap) {
      d.max_abs_gap = std::abs(diff);
      d.tau_at_max_gap = ccdf.grid[i];
    }
    d.max_signed_excess = std::max(d.max_signed_excess, diff);
    d.max_excess_over_ci = std::max(d.max_excess_over_ci, diff - 3.0 * ccdf.ci_halfwidth[i]);
  }
  return d;
}

struct MeanEstimate {
  double mean = 0.0;
  double ci_halfwidth = 0.0;  // 99%, batch means
};

inline MeanEstimate estimate_mean(std::span<const double> xs, std::size_t batches = kDefaultBatches) {
  if (xs.size() < batches) throw std::invalid_argument("estimate_mean: fewer samples than batches");
  const double se = detail::batch_mean_se(xs, batches).second;
  const double overall = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  return {overall, kZ99 * se};
}

// Joint pmf of m queue lengths on the box {0..q_max}^m, row-major with the
// first coordinate slowest.
struct JointPmfEstimate {
  int m = 0;
  int q_max = 0;
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;      // all snapshots, inside and outside the box
  std::uint64_t truncated = 0;  // snapshots with some coordinate above q_max

  double truncated_mass() const {
    return total == 0 ? 0.0 : static_cast<double>(truncated) / static_cast<double>(total);
  }
  std::size_t side() const { return static_cast<std::size_t>(q_max) + 1; }
  std::size_t index(std::span<const int> state) const {
    std::size_t idx = 0;
    for (int c : state) idx = idx * side() + static_cast<std::size_t>(c);
    return idx;
  }
  // Probability of a state, normalized over all snapshots.
  double pmf(std::span<const int> state) const {
    for (int c : state)
      if (c < 0 || c > q_max) return 0.0;
    return static_cast<double>(counts[index(state)]) / static_cast<double>(total);
  }
  double pmf(int i, int j) const {
    const int s[2] = {i, j};
    return pmf(std::span<const int>(s, 2));
  }
};

// Builds the joint pmf of the first m columns of row-major samples with the
// given stride. Without q_max, picks the smallest level whose marginal tails
// add up to less than 1%.
inline JointPmfEstimate joint_pmf(std::span<const std::uint32_t> samples, int stride, int m,
                                  std::optional<int> q_max = {}) {
  if (m < 1 || m > stride) throw std::invalid_argument("joint_pmf: need 1 <= m <= stride");
  const std::size_t rows = samples.size() / static_cast<std::size_t>(stride);
  if (rows == 0) throw std::invalid_argument("joint_pmf: no samples");
  JointPmfEstimate est;
  est.m = m;
  if (q_max) {
    est.q_max = *q_max;
  } else {
    std::uint32_t top = 0;
    for (std::size_t r = 0; r < rows; ++r)
      for (int c = 0; c < m; ++c) top = std::max(top, samples[r * static_cast<std::size_t>(stride) + static_cast<std::size_t>(c)]);
    std::vector<std::uint64_t> hist(static_cast<std::size_t>(top) + 2, 0);
    for (std::size_t r = 0; r < rows; ++r)
      for (int c = 0; c < m; ++c) ++hist[samples[r * static_cast<std::size_t>(stride) + static_cast<std::size_t>(c)]];
    // hist pools all m marginals; tail(q) sums their tails above q.
    std::uint64_t above = rows * static_cast<std::uint64_t>(m);
    int level = 0;
    for (;; ++level) {
      above -= hist[static_cast<std::size_t>(level)];
      if (static_cast<double>(above) < 0.01 * static_cast<double>(rows)) break;
    }
    est.q_max = level;
  }
  std::size_t cells = 1;
  for (int c = 0; c < m; ++c) cells *= est.side();
  est.counts.assign(cells, 0);
  est.total = rows;
  std::vector<int> state(static_cast<std::size_t>(m));
  for (std::size_t r = 0; r < rows; ++r) {
    bool inside = true;
    for (int c = 0; c < m; ++c) {
      const auto v = samples[r * static_cast<std::size_t>(stride) + static_cast<std::size_t>(c)];
      if (v > static_cast<std::uint32_t>(est.q_max)) inside = false;
      state[static_cast<std::size_t>(c)] = static_cast<int>(v);
    }
    if (inside)
      ++est.counts[est.index(state)];
    else
      ++est.truncated;
  }
  return est;
}

inline JointPmfEstimate joint_pmf(const QueueSnapshots& snaps, int m, std::optional<int> q_max = {}) {
  return joint_pmf(snaps.lengths, snaps.m, m, q_max);
}

struct TvEstimate {
  double distance = 0.0;
  double truncation_error = 0.0;  // additive bound from mass outside the box
};

// Half the L1 distance between the in-box joint pmf and the product of its own
// marginals. Evaluated on integer counts (N^m scaling) whenever that fits in
// 128 bits, so a joint that factorizes exactly yields exactly zero.
// max_truncated guards against a box too small for the data.
inline TvEstimate tv_distance(const JointPmfEstimate& joint, double max_truncated = 0.01) {
  if (joint.truncated_mass() >= max_truncated)
    throw std::invalid_argument("tv_distance: " + std::to_string(100.0 * joint.truncated_mass()) +
                                "% of snapshots lie outside the box; increase q_max above " +
                                std::to_string(joint.q_max));
  const std::uint64_t inside = joint.total - joint.truncated;
  if (inside == 0) throw std::invalid_argument("tv_distance: empty joint pmf");
  const std::size_t side = joint.side();
  const auto m = static_cast<std::size_t>(joint.m);
  std::vector<std::vector<std::uint64_t>> marginal(m, std::vector<std::uint64_t>(side, 0));
  for (std::size_t cell = 0; cell < joint.counts.size(); ++cell) {
    std::size_t rest = cell;
    for (std::size_t c = m; c-- > 0;) {
      marginal[c][rest % side] += joint.counts[cell];
      rest /= side;
    }
  }
  const double log_scale = static_cast<double>(m) * std::log2(static_cast<double>(inside));
  double distance = 0.0;
  if (log_scale < 120.0) {
    unsigned __int128 scale = 1;
    for (std::size_t c = 0; c + 1 < m; ++c) scale *= inside;
    unsigned __int128 l1 = 0;
    for (std::size_t cell = 0; cell < joint.counts.size(); ++cell) {
      unsigned __int128 prod = 1;
      std::size_t rest = cell;
      for (std::size_t c = m; c-- > 0;) {
        prod *= marginal[c][rest % side];
        rest /= side;
      }
      const unsigned __int128 lhs = static_cast<unsigned __int128>(joint.counts[cell]) * scale;
      l1 += lhs > prod ? lhs - prod : prod - lhs;
    }
    distance = 0.5 * static_cast<double>(l1) / (static_cast<double>(scale) * static_cast<double>(inside));
  } else {
    const auto n = static_cast<double>(inside);
    double l1 = 0.0;
    for (std::size_t cell = 0; cell < joint.counts.size(); ++cell) {
      double q = 1.0;
      std::size_t rest = cell;
      for (std::size_t c = m; c-- > 0;) {
        q *= static_cast<double>(marginal[c][rest % side]) / n;
        rest /= side;
      }
      l1 += std::abs(static_cast<double>(joint.counts[cell]) / n - q);
    }
    distance = 0.5 * l1;
  }
  return {distance, joint.truncated_mass()};
}

// Probabilities that a job sends 0, 1 or 2 tasks to queues 1 and 2.
struct BalanceProbabilities {
  Rational p0;
  Rational p1;
  Rational p2;
};

inline BalanceProbabilities balance_probabilities(int n, int k) {
  if (n < 2 || k < 2 || k > n)
    throw std::invalid_argument("balance_probabilities: need 2 <= k <= n");
  const auto un = static_cast<std::uint64_t>(n);
  const auto uk = static_cast<std::uint64_t>(k);
  const BigInt total = binomial_exact(un, uk);
  return {Rational(binomial_exact(un - 2, uk), total),
          Rational(2 * binomial_exact(un - 2, uk - 1), total),
          Rational(binomial_exact(un - 2, uk - 2), total)};
}

// n -> infinity limits with k = p n.
inline BalanceProbabilities balance_limits(const Rational& p) {
  return {(1 - p) * (1 - p), 2 * p * (1 - p), p * p};
}

// Balance residual of state (1,1) for the first two queues:
//   pi(1,1)(p1 L + p2 L + 2 mu)
//   - [pi(0,1) p1 L / 2 + pi(1,0) p1 L / 2 + pi(0,0) p2 L + pi(1,2) mu + pi(2,1) mu].
// Zero for the true stationary law. Works for double or Rational.
template <class T, class Pmf>
T balance_residual(Pmf&& pi, const T& p1, const T& p2, const T& job_rate, const T& mu) {
  const T half = T(1) / T(2);
  return pi(1, 1) * (p1 * job_rate + p2 * job_rate + T(2) * mu) -
         (half * pi(0, 1) * p1 * job_rate + half * pi(1, 0) * p1 * job_rate +
          pi(0, 0) * p2 * job_rate + pi(1, 2) * mu + pi(2, 1) * mu);
}

// Stationary joint pmf of two independent M/M/1 queue lengths at load rho.
struct ProductGeometricPmf {
  Rational rho;
  Rational operator()(int i, int j) const {
    if (i < 0 || j < 0) return Rational(0);
    Rational r = (1 - rho) * (1 - rho);
    for (int s = 0; s < i + j; ++s) r *= rho;
    return r;
  }
};

struct ResidualEstimate {
  double value = 0.0;
  double standard_error = 0.0;  // batch means
};

// The residual is linear in pi, so it is the mean of a per-snapshot score;
// batch means of that score give its standard error.
inline ResidualEstimate balance_residual_estimate(const QueueSnapshots& snaps,
                                                  const BalanceProbabilities& probs,
                                                  double job_rate, double mu,
                                                  std::size_t batches = kDefaultBatches) {
  if (snaps.m < 2) throw std::invalid_argument("balance_residual_estimate: need two queues");
  const double p1 = to_double(probs.p1);
  const double p2 = to_double(probs.p2);
  const double out_rate = p1 * job_rate + p2 * job_rate + 2.0 * mu;
  std::vector<double> score(snaps.count());
  for (std::size_t s = 0; s < snaps.count(); ++s) {
    const auto a = snaps.length(s, 0);
    const auto b = snaps.length(s, 1);
    double v = 0.0;
    if (a == 1 && b == 1) v = out_rate;
    else if ((a == 0 && b == 1) || (a == 1 && b == 0)) v = -0.5 * p1 * job_rate;
    else if (a == 0 && b == 0) v = -p2 * job_rate;
    else if ((a == 1 && b == 2) || (a == 2 && b == 1)) v = -mu;
    score[s] = v;
  }
  const double se = detail::batch_mean_se(score, batches).second;
  const double overall = std::accumulate(score.begin(), score.end(), 0.0) / static_cast<double>(score.size());
  return {overall, se};
}

// Separation constant p lambda (1 - rho)^2 / (2 (11 Lambda + 8 mu)), Lambda = lambda / p.
template <class T>
T epsilon_theorem3(const T& p, const T& lambda, const T& mu) {
  if (!(p > T(0)) || p > T(1)) throw std::invalid_argument("epsilon_theorem3: need 0 < p <= 1");
  if (!(lambda < mu)) throw std::invalid_argument("epsilon_theorem3: need lambda < mu");
  const T rho = lambda / mu;
  const T job_rate = lambda / p;
  return p * lambda * (T(1) - rho) * (T(1) - rho) / (T(2) * (T(11) * job_rate + T(8) * mu));
}

struct CovarianceEstimate {
  int i = 0;
  int j = 0;
  double covariance = 0.0;
  double ci_halfwidth = 0.0;  // 99%, batch means
};

inline CovarianceEstimate covariance_estimate(std::span<const double> x, std::span<const double> y,
                                              std::size_t batches = kDefaultBatches) {
  if (x.size() != y.size()) throw std::invalid_argument("covariance_estimate: length mismatch");
  if (x.size() < 10000)
    throw std::invalid_argument("covariance_estimate: need at least 10^4 snapshots");
  auto cov = [](std::span<const double> a, std::span<const double> b) {
    const auto size = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / size;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / size;
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
    return s / size;
  };
  const std::size_t per = x.size() / batches;
  std::vector<double> per_batch(batches);
  for (std::size_t b = 0; b < batches; ++b)
    per_batch[b] = cov(x.subspan(b * per, per), y.subspan(b * per, per));
  return {0, 1, cov(x, y), kZ99 * detail::sample_sd(per_batch) / std::sqrt(static_cast<double>(batches))};
}

// Batch-means covariance of the workloads of the requested queue pairs.
inline std::vector<CovarianceEstimate> workload_covariance(const QueueSnapshots& snaps,
                                                           std::span<const std::pair<int, int>> pairs,
                                                           std::size_t batches = kDefaultBatches) {
  std::vector<CovarianceEstimate> out;
  const std::size_t count = snaps.count();
  for (const auto& [i, j] : pairs) {
    if (i < 0 || j < 0 || i >= snaps.m || j >= snaps.m)
      throw std::invalid_argument("workload_covariance: queue index outside snapshot width");
    std::vector<double> x(count), y(count);
    for (std::size_t s = 0; s < count; ++s) {
      x[s] = snaps.workload(s, i);
      y[s] = snaps.workload(s, j);
    }
    auto est = covariance_estimate(x, y, batches);
    est.i = i;
    est.j = j;
    out.push_back(est);
  }
  return out;
}

}  // namespace forkjoin
