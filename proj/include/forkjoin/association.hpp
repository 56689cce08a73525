#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "forkjoin/combinatorics.hpp"

namespace forkjoin {

// Exact law of the arrival-indicator vector A in {0,1}^k of queues 1..k at one
// observation epoch when epochs are job arrivals (rate Lambda) merged with an
// independent Poisson stream of rate beta. Pattern a is encoded as a bitmask:
// bit i set means queue i+1 receives a task.
struct ArrivalPatternDist {
  int n = 0;
  int k = 0;
  Rational job_rate;
  Rational beta;
  std::vector<Rational> probabilities;  // indexed by pattern bitmask, size 2^k

  std::size_t patterns() const { return probabilities.size(); }
};

inline constexpr int kMaxPatternWidth = 5;

// For |a| = m > 0: P(a) = Lambda/(Lambda+beta) * C(n-k, k-m) / C(n, k).
// The all-zero pattern takes the remaining mass.
inline ArrivalPatternDist arrival_pattern_dist(int n, int k, const Rational& job_rate,
                                               const Rational& beta) {
  detail::require_nk(n, k);
  if (k > 20) throw std::invalid_argument("arrival_pattern_dist: k too large to tabulate 2^k patterns");
  if (!(job_rate > 0)) throw std::invalid_argument("arrival_pattern_dist: Lambda must be positive");
  if (beta < 0) throw std::invalid_argument("arrival_pattern_dist: beta must be nonnegative");
  ArrivalPatternDist dist{n, k, job_rate, beta, {}};
  const std::size_t size = std::size_t{1} << k;
  dist.probabilities.assign(size, Rational(0));
  const Rational arrival = job_rate / (job_rate + beta);
  const BigInt total = binomial_exact(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(k));
  std::vector<Rational> by_weight(static_cast<std::size_t>(k) + 1);
  for (int m = 1; m <= k; ++m)
    by_weight[static_cast<std::size_t>(m)] =
        arrival *
        Rational(binomial_exact(static_cast<std::uint64_t>(n - k), static_cast<std::uint64_t>(k - m)),
                 total);
  Rational rest = 1;
  for (std::size_t a = 1; a < size; ++a) {
    dist.probabilities[a] = by_weight[static_cast<std::size_t>(std::popcount(a))];
    rest -= dist.probabilities[a];
  }
  dist.probabilities[0] = rest;
  return dist;
}

// A boolean function on {0,1}^k stored as a truth table; bit a of `table` is f(a).
struct MonotoneBooleanFunction {
  int k = 0;
  std::uint32_t table = 0;

  bool operator()(std::uint32_t a) const { return (table >> a) & 1U; }
  bool is_constant() const {
    const std::uint32_t full = k == 5 ? 0xffffffffU : ((1U << (1U << k)) - 1U);
    return table == 0 || table == full;
  }
  friend bool operator==(const MonotoneBooleanFunction&, const MonotoneBooleanFunction&) = default;
};

// Entrywise monotonicity of a truth table on k inputs.
inline bool is_monotone(std::uint32_t table, int k) {
  const std::uint32_t size = 1U << k;
  for (std::uint32_t a = 0; a < size; ++a) {
    if (!((table >> a) & 1U)) continue;
    for (int i = 0; i < k; ++i) {
      const std::uint32_t up = a | (1U << i);
      if (!((table >> up) & 1U)) return false;
    }
  }
  return true;
}

// All monotone functions on k <= 5 inputs, ascending by truth table. Built from
// the decomposition f(x, x_k) = x_k ? f1(x) : f0(x) with f0 <= f1 pointwise.
inline std::vector<MonotoneBooleanFunction> enumerate_monotone_functions(int k) {
  if (k < 0 || k > kMaxPatternWidth)
    throw std::invalid_argument("enumerate_monotone_functions: k must be in [0, 5], got " +
                                std::to_string(k) + " (Dedekind numbers grow doubly exponentially)");
  std::vector<std::uint32_t> level{0U, 1U};
  for (int w = 1; w <= k; ++w) {
    const unsigned half = 1U << (w - 1);
    std::vector<std::uint32_t> next;
    for (const std::uint32_t lo : level)
      for (const std::uint32_t hi : level)
        if ((lo & ~hi) == 0) next.push_back(lo | (hi << half));
    std::sort(next.begin(), next.end());
    level = std::move(next);
  }
  std::vector<MonotoneBooleanFunction> out;
  out.reserve(level.size());
  for (const std::uint32_t t : level) out.push_back({k, t});
  return out;
}

struct AssociationCounterexample {
  MonotoneBooleanFunction f;
  MonotoneBooleanFunction g;
  Rational expected_product;   // E[f g]
  Rational product_of_means;   // E[f] E[g]

  Rational gap() const { return expected_product - product_of_means; }
};

struct AssociationVerdict {
  bool associated = true;
  std::optional<AssociationCounterexample> counterexample;
  std::uint64_t pairs_checked = 0;
};

struct AssociationOptions {
  // Width 5 means ~29M function pairs; it must be asked for explicitly.
  bool allow_width_five = false;
  unsigned threads = 1;
};

namespace detail {

// Probabilities as integer numerators over one common denominator.
struct CommonDenominator {
  std::vector<BigInt> numerators;
  BigInt denominator;
};

inline CommonDenominator common_denominator(const std::vector<Rational>& ps) {
  BigInt lcm_den = 1;
  for (const auto& p : ps) lcm_den = boost::multiprecision::lcm(lcm_den, denominator(p));
  CommonDenominator out;
  out.denominator = lcm_den;
  for (const auto& p : ps) out.numerators.push_back(numerator(p) * (lcm_den / denominator(p)));
  return out;
}

inline BigInt weight(const std::vector<BigInt>& num, std::uint32_t table) {
  BigInt s = 0;
  for (std::uint32_t bits = table; bits != 0; bits &= bits - 1) s += num[std::countr_zero(bits)];
  return s;
}

// Searches pairs (i, j), i <= j, for i in [begin, end) of the non-constant
// functions; returns the first violating pair in lexicographic order.
template <class Int>
std::optional<std::pair<std::size_t, std::size_t>> scan_pairs(const std::vector<std::uint32_t>& tables,
                                                             const std::vector<Int>& num,
                                                             const Int& denom, std::size_t begin,
                                                             std::size_t end,
                                                             std::uint64_t& checked) {
  std::vector<Int> mass(tables.size());
  for (std::size_t i = 0; i < tables.size(); ++i) {
    Int s = 0;
    for (std::uint32_t bits = tables[i]; bits != 0; bits &= bits - 1) s += num[std::countr_zero(bits)];
    mass[i] = s;
  }
  for (std::size_t i = begin; i < end; ++i) {
    for (std::size_t j = i; j < tables.size(); ++j) {
      ++checked;
      Int joint = 0;
      for (std::uint32_t bits = tables[i] & tables[j]; bits != 0; bits &= bits - 1)
        joint += num[std::countr_zero(bits)];
      // E[fg] < E[f]E[g]  <=>  joint * D < mass_i * mass_j
      if (joint * denom < mass[i] * mass[j]) return std::make_pair(i, j);
    }
  }
  return std::nullopt;
}

}  // namespace detail

// Exhaustive exact test of E[f(A) g(A)] >= E[f(A)] E[g(A)] over all pairs of
// monotone binary functions. Constant functions and the (g, f) mirror of each
// pair are skipped since they cannot change the verdict.
inline AssociationVerdict check_association(const ArrivalPatternDist& dist,
                                            const AssociationOptions& options = {}) {
  if (dist.k > kMaxPatternWidth)
    throw std::invalid_argument("check_association: pattern width k must be <= 5");
  if (dist.k == kMaxPatternWidth && !options.allow_width_five)
    throw std::invalid_argument(
        "check_association: k = 5 checks ~29M pairs; set allow_width_five to run it");

  std::vector<std::uint32_t> tables;
  for (const auto& f : enumerate_monotone_functions(dist.k))
    if (!f.is_constant()) tables.push_back(f.table);

  const auto common = detail::common_denominator(dist.probabilities);
  // Products of masses stay below D^2, so 128-bit arithmetic suffices when D < 2^62.
  const bool narrow = common.denominator < (BigInt(1) << 62);
  const unsigned workers = std::max(1U, std::min<unsigned>(options.threads, static_cast<unsigned>(std::max<std::size_t>(1, tables.size()))));

  std::vector<std::optional<std::pair<std::size_t, std::size_t>>> found(workers);
  std::vector<std::uint64_t> checked(workers, 0);
  auto work = [&](unsigned w) {
    // Contiguous row blocks keep the lowest-index violation in the lowest worker.
    const std::size_t rows = tables.size();
    const std::size_t chunk = (rows + workers - 1) / workers;
    const std::size_t begin = std::min(rows, chunk * w);
    const std::size_t end = std::min(rows, begin + chunk);
    if (narrow) {
      std::vector<__int128> num;
      for (const auto& x : common.numerators) num.push_back(static_cast<__int128>(x.convert_to<long long>()));
      const auto denom = static_cast<__int128>(common.denominator.convert_to<long long>());
      found[w] = detail::scan_pairs<__int128>(tables, num, denom, begin, end, checked[w]);
    } else {
      found[w] = detail::scan_pairs<BigInt>(tables, common.numerators, common.denominator, begin,
                                            end, checked[w]);
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }

  AssociationVerdict verdict;
  for (unsigned w = 0; w < workers; ++w) verdict.pairs_checked += checked[w];
  for (unsigned w = 0; w < workers; ++w) {
    if (found[w] && !verdict.counterexample) {
      const auto [i, j] = *found[w];
      // Report the pairs a sequential scan would have visited, whatever the worker count.
      const std::size_t rows = tables.size();
      verdict.pairs_checked = i * rows - i * (i - 1) / 2 + (j - i + 1);
      const MonotoneBooleanFunction f{dist.k, tables[i]};
      const MonotoneBooleanFunction g{dist.k, tables[j]};
      const Rational ef(detail::weight(common.numerators, f.table), common.denominator);
      const Rational eg(detail::weight(common.numerators, g.table), common.denominator);
      const Rational efg(detail::weight(common.numerators, f.table & g.table), common.denominator);
      verdict.associated = false;
      verdict.counterexample = AssociationCounterexample{f, g, efg, ef * eg};
    }
  }
  return verdict;
}

// Probability that a job sends at least one task to queues 1..k. Equal to 1
// whenever k > n/2.
inline Rational block_hit_probability(int n, int k) {
  detail::require_nk(n, k);
  if (2 * k > n) return Rational(1);
  return 1 - p_miss_block_exact(n, k);
}

// Smallest oversampling rate the sufficient condition admits:
// max(0, Lambda (C(n, k) p^2 - 1)).
inline Rational beta_threshold(int n, int k, const Rational& job_rate) {
  const Rational p = block_hit_probability(n, k);
  const Rational total(binomial_exact(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(k)));
  const Rational beta = job_rate * (total * p * p - 1);
  return beta > 0 ? beta : Rational(0);
}

struct PairCovariance {
  int i = 0;
  int j = 0;
  Rational covariance;
};

// Exact Cov(A_i, A_j) for every pair i < j of pattern coordinates.
inline std::vector<PairCovariance> covariance_check(const ArrivalPatternDist& dist) {
  std::vector<Rational> marginal(static_cast<std::size_t>(dist.k), Rational(0));
  for (std::size_t a = 0; a < dist.patterns(); ++a)
    for (int i = 0; i < dist.k; ++i)
      if ((a >> i) & 1U) marginal[static_cast<std::size_t>(i)] += dist.probabilities[a];
  std::vector<PairCovariance> out;
  for (int i = 0; i < dist.k; ++i) {
    for (int j = i + 1; j < dist.k; ++j) {
      Rational both = 0;
      for (std::size_t a = 0; a < dist.patterns(); ++a)
        if (((a >> i) & 1U) && ((a >> j) & 1U)) both += dist.probabilities[a];
      out.push_back({i, j, both - marginal[static_cast<std::size_t>(i)] * marginal[static_cast<std::size_t>(j)]});
    }
  }
  return out;
}

}  // namespace forkjoin
