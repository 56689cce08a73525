#pragma once

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "forkjoin/random.hpp"

namespace forkjoin {

struct Exponential {
  double rate;
};

struct Deterministic {
  double value;
};

struct HyperExponential {
  std::vector<double> weights;
  std::vector<double> rates;
};

// Pareto law with density proportional to x^{-alpha-1} on [lower, upper].
struct TruncatedPareto {
  double alpha;
  double lower;
  double upper;
};

// Service-time law G. Moments are fixed at construction.
class ServiceDistribution {
 public:
  using Variant = std::variant<Exponential, Deterministic, HyperExponential, TruncatedPareto>;

  static ServiceDistribution exponential(double rate) {
    if (!(rate > 0.0) || !std::isfinite(rate))
      throw std::invalid_argument("exponential service: rate must be positive, got " +
                                  std::to_string(rate));
    return ServiceDistribution(Exponential{rate}, 1.0 / rate, 2.0 / (rate * rate));
  }

  static ServiceDistribution deterministic(double value) {
    if (!(value > 0.0) || !std::isfinite(value))
      throw std::invalid_argument("deterministic service: value must be positive, got " +
                                  std::to_string(value));
    return ServiceDistribution(Deterministic{value}, value, value * value);
  }

  static ServiceDistribution hyperexponential(std::vector<double> weights,
                                              std::vector<double> rates) {
    if (weights.empty() || weights.size() != rates.size())
      throw std::invalid_argument(
          "hyperexponential service: weights and rates must be nonempty and equal length");
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!(weights[i] > 0.0))
        throw std::invalid_argument("hyperexponential service: weights must be positive");
      if (!(rates[i] > 0.0))
        throw std::invalid_argument("hyperexponential service: rates must be positive");
    }
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9)
      throw std::invalid_argument("hyperexponential service: weights must sum to 1, got " +
                                  std::to_string(total));
    double mean = 0.0;
    double second = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      mean += weights[i] / rates[i];
      second += 2.0 * weights[i] / (rates[i] * rates[i]);
    }
    return ServiceDistribution(HyperExponential{std::move(weights), std::move(rates)}, mean,
                               second);
  }

  static ServiceDistribution truncated_pareto(double alpha, double lower, double upper) {
    if (!(alpha > 0.0))
      throw std::invalid_argument("truncated pareto service: alpha must be positive");
    if (!(lower > 0.0) || !(upper > lower))
      throw std::invalid_argument("truncated pareto service: need 0 < xmin < xmax");
    return ServiceDistribution(TruncatedPareto{alpha, lower, upper},
                               pareto_moment(alpha, lower, upper, 1),
                               pareto_moment(alpha, lower, upper, 2));
  }

  const Variant& law() const { return law_; }
  double mean() const { return mean_; }
  // g2
  double second_moment() const { return second_moment_; }
  bool is_exponential() const { return std::holds_alternative<Exponential>(law_); }

  std::string name() const {
    struct Visitor {
      std::string operator()(const Exponential&) const { return "exponential"; }
      std::string operator()(const Deterministic&) const { return "deterministic"; }
      std::string operator()(const HyperExponential&) const { return "hyperexponential"; }
      std::string operator()(const TruncatedPareto&) const { return "truncated_pareto"; }
    };
    return std::visit(Visitor{}, law_);
  }

  double sample(RandomStream& rng) const {
    switch (law_.index()) {
      case 0:
        return rng.exponential(std::get<Exponential>(law_).rate);
      case 1:
        return std::get<Deterministic>(law_).value;
      case 2: {
        const auto& h = std::get<HyperExponential>(law_);
        const double u = rng.uniform();
        double acc = 0.0;
        std::size_t branch = h.weights.size() - 1;
        for (std::size_t i = 0; i + 1 < h.weights.size(); ++i) {
          acc += h.weights[i];
          if (u < acc) {
            branch = i;
            break;
          }
        }
        return rng.exponential(h.rates[branch]);
      }
      default: {
        const auto& p = std::get<TruncatedPareto>(law_);
        const double tail = std::pow(p.lower / p.upper, p.alpha);
        const double u = rng.uniform();
        return p.lower * std::pow(1.0 - u * (1.0 - tail), -1.0 / p.alpha);
      }
    }
  }

 private:
  ServiceDistribution(Variant law, double mean, double second)
      : law_(std::move(law)), mean_(mean), second_moment_(second) {}

  // E[X^j] of the truncated law, closed form.
  static double pareto_moment(double alpha, double lower, double upper, int j) {
    const double norm = alpha * std::pow(lower, alpha) / (1.0 - std::pow(lower / upper, alpha));
    const double e = j - alpha;
    if (std::abs(e) < 1e-12) return norm * std::log(upper / lower);
    return norm * (std::pow(upper, e) - std::pow(lower, e)) / e;
  }

  Variant law_;
  double mean_;
  double second_moment_;
};

}  // namespace forkjoin
