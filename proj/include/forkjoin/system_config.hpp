#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

#include "forkjoin/service.hpp"

namespace forkjoin {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// One n-server limited fork-join system. Immutable once built; the
// constructor enforces 1 <= k <= n and rho = lambda * E[S] < 1.
class SystemConfig {
 public:
  SystemConfig(int n, int k, double lambda, ServiceDistribution service, std::uint64_t seed = 1,
               double warmup_fraction = 0.2, std::uint64_t horizon_jobs = 125000)
      : n_(n),
        k_(k),
        lambda_(lambda),
        service_(std::move(service)),
        seed_(seed),
        warmup_fraction_(warmup_fraction),
        horizon_jobs_(horizon_jobs) {
    if (n_ < 1) throw ConfigError("n must be a positive integer, got " + std::to_string(n_));
    if (k_ < 1 || k_ > n_)
      throw ConfigError("k must satisfy 1 <= k <= n (each job forks into k distinct servers), "
                        "got k=" + std::to_string(k_) + ", n=" + std::to_string(n_));
    if (!(lambda_ > 0.0) || !std::isfinite(lambda_))
      throw ConfigError("lambda must be positive and finite, got " + std::to_string(lambda_));
    if (!(rho() < 1.0))
      throw ConfigError("unstable system: rho = lambda * mean(service) = " +
                        std::to_string(rho()) + " must be < 1");
    if (!(warmup_fraction_ >= 0.0 && warmup_fraction_ < 1.0))
      throw ConfigError("warmup_fraction must lie in [0, 1), got " +
                        std::to_string(warmup_fraction_));
    if (horizon_jobs_ < 1) throw ConfigError("horizon_jobs must be positive");
  }

  int n() const { return n_; }
  int k() const { return k_; }
  // Per-queue task arrival rate.
  double lambda() const { return lambda_; }
  // Job arrival rate n * lambda / k.
  double job_rate() const { return static_cast<double>(n_) * lambda_ / static_cast<double>(k_); }
  double rho() const { return lambda_ * service_.mean(); }
  const ServiceDistribution& service() const { return service_; }
  std::uint64_t seed() const { return seed_; }
  double warmup_fraction() const { return warmup_fraction_; }
  std::uint64_t horizon_jobs() const { return horizon_jobs_; }
  std::uint64_t warmup_jobs() const {
    return static_cast<std::uint64_t>(warmup_fraction_ * static_cast<double>(horizon_jobs_));
  }

  SystemConfig with_horizon(std::uint64_t jobs) const {
    SystemConfig c = *this;
    c.horizon_jobs_ = jobs;
    if (jobs < 1) throw ConfigError("horizon_jobs must be positive");
    return c;
  }

 private:
  int n_;
  int k_;
  double lambda_;
  ServiceDistribution service_;
  std::uint64_t seed_;
  double warmup_fraction_;
  std::uint64_t horizon_jobs_;
};

}  // namespace forkjoin
