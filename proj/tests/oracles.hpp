#pragma once

// Brute-force reference computations shared by the unit and acceptance tests.
// Everything here counts subsets or multiplies directly; none of it calls the
// closed forms under test.

#include <bit>
#include <cstdint>
#include <vector>

#include "forkjoin/combinatorics.hpp"

namespace oracle {

using forkjoin::BigInt;
using forkjoin::Rational;

// Calls fn(mask) for every k-subset of {0..n-1}, n <= 30.
template <class Fn>
void for_each_subset(int n, int k, Fn&& fn) {
  if (k == 0) {
    fn(std::uint32_t{0});
    return;
  }
  // Gosper's hack over masks with k bits set.
  std::uint32_t mask = (std::uint32_t{1} << k) - 1;
  const std::uint32_t limit = std::uint32_t{1} << n;
  while (mask < limit) {
    fn(mask);
    const std::uint32_t c = mask & -mask;
    const std::uint32_t r = mask + c;
    mask = (((r ^ mask) >> 2) / c) | r;
  }
}

inline std::uint32_t first(int m) { return m >= 32 ? ~0u : (std::uint32_t{1} << m) - 1; }

struct SubsetCounts {
  BigInt total = 0;
  BigInt hit_block = 0;     // at least one of the first k chosen
  BigInt at_most_one = 0;   // at most one of the first k chosen
  BigInt two_queue[3] = {0, 0, 0};  // how many of queues 0 and 1 are chosen
};

inline SubsetCounts count_subsets(int n, int k) {
  SubsetCounts c;
  long long total = 0, hit = 0, le1 = 0, q[3] = {0, 0, 0};
  const std::uint32_t block = first(k);
  for_each_subset(n, k, [&](std::uint32_t mask) {
    ++total;
    const int inside = std::popcount(mask & block);
    hit += inside >= 1;
    le1 += inside <= 1;
    ++q[std::popcount(mask & 3u)];
  });
  c.total = total;
  c.hit_block = hit;
  c.at_most_one = le1;
  for (int i = 0; i < 3; ++i) c.two_queue[i] = q[i];
  return c;
}

inline BigInt binomial_product(unsigned a, unsigned b) {
  if (b > a) return 0;
  BigInt r = 1;
  for (unsigned i = 1; i <= b; ++i) r = r * (a - b + i) / i;  // exact at each step
  return r;
}

inline Rational p_select_le1(int n, int k) {
  const auto c = count_subsets(n, k);
  return Rational(c.at_most_one, c.total);
}

inline Rational lambda_tilde(int n, int k, const Rational& lambda) {
  const auto c = count_subsets(n, k);
  const Rational job_rate = lambda * n / k;
  return job_rate / k * Rational(c.hit_block, c.total);
}

struct Balance {
  Rational p0, p1, p2;
};

inline Balance balance(int n, int k) {
  const auto c = count_subsets(n, k);
  return {Rational(c.two_queue[0], c.total), Rational(c.two_queue[1], c.total), Rational(c.two_queue[2], c.total)};
}

inline Rational beta_threshold(int n, int k, const Rational& job_rate) {
  const auto c = count_subsets(n, k);
  const Rational p(c.hit_block, c.total);
  const Rational b = job_rate * (Rational(c.total) * p * p - 1);
  return b > 0 ? b : Rational(0);
}

}  // namespace oracle
