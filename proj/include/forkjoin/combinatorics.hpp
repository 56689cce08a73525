#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace forkjoin {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline double to_double(const Rational& r) { return r.convert_to<double>(); }

enum class Arithmetic { exact, log_space };

// Largest n for which the default context keeps binomials exact.
inline constexpr int kExactLimit = 64;

struct CombinatorialContext {
  int n;
  int k;
  Arithmetic mode;

  static CombinatorialContext for_system(int n, int k) {
    return {n, k, n <= kExactLimit ? Arithmetic::exact : Arithmetic::log_space};
  }
};

namespace detail {

inline void require_nk(int n, int k) {
  if (n < 1 || k < 1 || k > n)
    throw std::invalid_argument("combinatorics: need 1 <= k <= n, got n=" + std::to_string(n) +
                                ", k=" + std::to_string(k));
}

inline std::vector<std::uint64_t> primes_up_to(std::uint64_t limit) {
  std::vector<bool> composite(limit + 1, false);
  std::vector<std::uint64_t> primes;
  for (std::uint64_t p = 2; p <= limit; ++p) {
    if (composite[p]) continue;
    primes.push_back(p);
    for (std::uint64_t q = p * p; q <= limit; q += p) composite[q] = true;
  }
  return primes;
}

// Exponent of prime p in m!.
inline std::uint64_t legendre(std::uint64_t m, std::uint64_t p) {
  std::uint64_t e = 0;
  while (m > 0) {
    m /= p;
    e += m;
  }
  return e;
}

}  // namespace detail

// C(a, b) as an exact integer, built from its prime factorization. Zero when b > a.
inline BigInt binomial_exact(std::uint64_t a, std::uint64_t b) {
  if (b > a) return 0;
  if (b == 0 || b == a) return 1;
  BigInt result = 1;
  for (const std::uint64_t p : detail::primes_up_to(a)) {
    const std::uint64_t e = detail::legendre(a, p) - detail::legendre(b, p) - detail::legendre(a - b, p);
    if (e > 0) result *= boost::multiprecision::pow(BigInt(p), static_cast<unsigned>(e));
  }
  return result;
}

// log C(a, b); -inf when b > a.
inline double log_binomial(std::uint64_t a, std::uint64_t b) {
  if (b > a) return -std::numeric_limits<double>::infinity();
  if (b == 0 || b == a) return 0.0;
  const auto x = static_cast<double>(a);
  const auto y = static_cast<double>(b);
  return std::lgamma(x + 1.0) - std::lgamma(y + 1.0) - std::lgamma(x - y + 1.0);
}

// A binomial coefficient in the context's arithmetic.
class CombinatorialValue {
 public:
  static CombinatorialValue exact(BigInt v) { return CombinatorialValue(Rational(std::move(v))); }
  static CombinatorialValue from_log(double log_value) { return CombinatorialValue(log_value); }

  bool is_exact() const { return std::holds_alternative<Rational>(v_); }
  const Rational& exact_value() const { return std::get<Rational>(v_); }
  double value() const {
    return is_exact() ? to_double(exact_value()) : std::exp(std::get<double>(v_));
  }
  double log() const {
    if (!is_exact()) return std::get<double>(v_);
    const Rational& r = exact_value();
    if (r == 0) return -std::numeric_limits<double>::infinity();
    // cpp_int -> double saturates past 1e308; go through the decimal exponent there.
    const double d = to_double(r);
    if (std::isfinite(d)) return std::log(d);
    const std::string digits = numerator(r).str();
    return std::log(std::stod("0." + digits.substr(0, 17))) +
           static_cast<double>(digits.size()) * std::log(10.0);
  }

 private:
  explicit CombinatorialValue(Rational r) : v_(std::move(r)) {}
  explicit CombinatorialValue(double log_value) : v_(log_value) {}
  std::variant<Rational, double> v_;
};

inline CombinatorialValue binomial(const CombinatorialContext& ctx, std::uint64_t a,
                                   std::uint64_t b) {
  if (ctx.mode == Arithmetic::exact) return CombinatorialValue::exact(binomial_exact(a, b));
  return CombinatorialValue::from_log(log_binomial(a, b));
}

// Ratio C(a, b) / C(c, d) in the context's arithmetic, returned as a double.
inline double binomial_ratio(const CombinatorialContext& ctx, std::uint64_t a, std::uint64_t b,
                             std::uint64_t c, std::uint64_t d) {
  if (ctx.mode == Arithmetic::exact)
    return to_double(Rational(binomial_exact(a, b), binomial_exact(c, d)));
  if (b > a) return 0.0;
  return std::exp(log_binomial(a, b) - log_binomial(c, d));
}

// Probability that a job picks at most one of queues 1..k:
// [C(n-k, k) + k C(n-k, k-1)] / C(n, k).
inline Rational p_select_le1_exact(int n, int k) {
  detail::require_nk(n, k);
  const auto un = static_cast<std::uint64_t>(n);
  const auto uk = static_cast<std::uint64_t>(k);
  return Rational(binomial_exact(un - uk, uk) + BigInt(k) * binomial_exact(un - uk, uk - 1),
                  binomial_exact(un, uk));
}

inline double p_select_le1(const CombinatorialContext& ctx) {
  detail::require_nk(ctx.n, ctx.k);
  if (ctx.mode == Arithmetic::exact) return to_double(p_select_le1_exact(ctx.n, ctx.k));
  const auto n = static_cast<std::uint64_t>(ctx.n);
  const auto k = static_cast<std::uint64_t>(ctx.k);
  const double denom = log_binomial(n, k);
  const double none = k <= n - k ? std::exp(log_binomial(n - k, k) - denom) : 0.0;
  const double one = std::exp(std::log(static_cast<double>(k)) + log_binomial(n - k, k - 1) - denom);
  return std::min(1.0, none + one);
}

// Probability that a job sends no task to queues 1..k: C(n-k, k) / C(n, k).
inline Rational p_miss_block_exact(int n, int k) {
  detail::require_nk(n, k);
  const auto un = static_cast<std::uint64_t>(n);
  const auto uk = static_cast<std::uint64_t>(k);
  return Rational(binomial_exact(un - uk, uk), binomial_exact(un, uk));
}

// Per-queue arrival rate of queues 1..k in the coupled system where a job
// keeps at most one task inside the block: (Lambda / k) (1 - C(n-k,k)/C(n,k)),
// Lambda = n lambda / k.
inline Rational lambda_tilde_exact(int n, int k, const Rational& lambda) {
  const Rational job_rate = lambda * n / k;
  return job_rate / k * (1 - p_miss_block_exact(n, k));
}

inline double lambda_tilde(const CombinatorialContext& ctx, double lambda) {
  detail::require_nk(ctx.n, ctx.k);
  const auto n = static_cast<std::uint64_t>(ctx.n);
  const auto k = static_cast<std::uint64_t>(ctx.k);
  const double job_rate = static_cast<double>(ctx.n) * lambda / static_cast<double>(ctx.k);
  if (ctx.mode == Arithmetic::exact || 2 * k > n)
    return job_rate / static_cast<double>(ctx.k) * (1.0 - binomial_ratio(ctx, n - k, k, n, k));
  // C(n-k,k)/C(n,k) = prod_i (1 - k/(n-i)); summing log1p terms avoids the lgamma cancellation.
  double log_miss = 0.0;
  for (std::uint64_t i = 0; i < k; ++i) log_miss += std::log1p(-static_cast<double>(k) / static_cast<double>(n - i));
  return job_rate / static_cast<double>(ctx.k) * -std::expm1(log_miss);
}

}  // namespace forkjoin
