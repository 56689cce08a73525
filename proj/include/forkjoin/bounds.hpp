#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

namespace forkjoin {

inline void require_subcritical(double lambda, double mu) {
  if (!(lambda >= 0.0) || !(lambda < mu))
    throw std::invalid_argument("M/M/1 task delay requires 0 <= lambda < mu");
}

// Sojourn-time cdf of an M/M/1 FIFO queue: 1 - exp(-(mu - lambda) tau).
inline double task_cdf_mm1(double lambda, double mu, double tau) {
  require_subcritical(lambda, mu);
  if (tau <= 0.0) return 0.0;
  return -std::expm1(-(mu - lambda) * tau);
}

struct AnalyticMM1 {
  double lambda;
  double mu;
};

struct EmpiricalDelays {
  std::vector<double> sorted;
};

// Marginal task-delay cdf F, either closed-form M/M/1 or an empirical law.
class TaskDelayCdf {
 public:
  static TaskDelayCdf mm1(double lambda, double mu) {
    require_subcritical(lambda, mu);
    return TaskDelayCdf(AnalyticMM1{lambda, mu});
  }

  static TaskDelayCdf empirical(std::vector<double> samples) {
    if (samples.empty()) throw std::invalid_argument("empirical task-delay cdf needs samples");
    std::sort(samples.begin(), samples.end());
    return TaskDelayCdf(EmpiricalDelays{std::move(samples)});
  }

  double operator()(double tau) const {
    if (const auto* a = std::get_if<AnalyticMM1>(&law_)) return task_cdf_mm1(a->lambda, a->mu, tau);
    const auto& s = std::get<EmpiricalDelays>(law_).sorted;
    if (tau < 0.0) return 0.0;
    const auto it = std::upper_bound(s.begin(), s.end(), tau);
    return static_cast<double>(it - s.begin()) / static_cast<double>(s.size());
  }

  // Smallest tau with F(tau) >= u, for u in (0, 1).
  double quantile(double u) const {
    if (const auto* a = std::get_if<AnalyticMM1>(&law_)) return -std::log1p(-u) / (a->mu - a->lambda);
    const auto& s = std::get<EmpiricalDelays>(law_).sorted;
    const auto idx = static_cast<std::size_t>(std::ceil(u * static_cast<double>(s.size())));
    return s[std::min(s.size() - 1, idx == 0 ? 0 : idx - 1)];
  }

  bool is_analytic() const { return std::holds_alternative<AnalyticMM1>(law_); }
  const std::variant<AnalyticMM1, EmpiricalDelays>& law() const { return law_; }

 private:
  explicit TaskDelayCdf(std::variant<AnalyticMM1, EmpiricalDelays> law) : law_(std::move(law)) {}
  std::variant<AnalyticMM1, EmpiricalDelays> law_;
};

// P(max of k independent task delays > tau) = 1 - F(tau)^k.
inline double independence_ccdf(const TaskDelayCdf& cdf, int k, double tau) {
  if (k < 1) throw std::invalid_argument("independence_ccdf: k must be >= 1");
  const double f = cdf(tau);
  if (f >= 1.0) return 0.0;
  // 1 - f^k = -expm1(k log f), accurate when f^k is close to 1.
  if (f <= 0.0) return 1.0;
  return -std::expm1(static_cast<double>(k) * std::log(f));
}

// H_m by compensated (Neumaier) summation, smallest terms first.
inline double harmonic(long long m) {
  if (m < 1) throw std::invalid_argument("harmonic: m must be >= 1");
  double sum = 0.0;
  double comp = 0.0;
  for (long long j = m; j >= 1; --j) {
    const double term = 1.0 / static_cast<double>(j);
    const double t = sum + term;
    if (std::abs(sum) >= std::abs(term))
      comp += (sum - t) + term;
    else
      comp += (term - t) + sum;
    sum = t;
  }
  return sum + comp;
}

// H_k / (mu - lambda): the mean of the max of k independent M/M/1 sojourn times.
inline double asymptotic_mean_mm1(int k, double lambda, double mu) {
  require_subcritical(lambda, mu);
  return harmonic(k) / (mu - lambda);
}

// Geometric grid of `points` taus from F^{-1}(0.01) to the tau where the
// bound's survival 1 - F(tau)^k falls to 1e-4.
inline std::vector<double> ccdf_grid(const TaskDelayCdf& cdf, int k, std::size_t points = 200) {
  if (points < 2) throw std::invalid_argument("ccdf_grid: need at least two points");
  const double lo = cdf.quantile(0.01);
  const double hi = cdf.quantile(std::pow(1.0 - 1e-4, 1.0 / static_cast<double>(k)));
  if (!(lo > 0.0) || !(hi > lo)) throw std::invalid_argument("ccdf_grid: degenerate delay law");
  std::vector<double> grid(points);
  const double ratio = std::log(hi / lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) grid[i] = lo * std::exp(ratio * static_cast<double>(i));
  grid.back() = hi;
  return grid;
}

// Mean of the independence bound, by integrating its survival function. Exact
// closed form for the analytic M/M/1 law; for an empirical F the bound's law is
// the max of k draws from a step cdf, integrated piecewise.
inline double independence_mean(const TaskDelayCdf& cdf, int k) {
  if (const auto* a = std::get_if<AnalyticMM1>(&cdf.law())) return asymptotic_mean_mm1(k, a->lambda, a->mu);
  const auto& s = std::get<EmpiricalDelays>(cdf.law()).sorted;
  double mean = 0.0;
  double prev = 0.0;
  const auto size = static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    // On [prev, s[i]) the cdf equals i / size.
    const double f = static_cast<double>(i) / size;
    mean += (s[i] - prev) * (1.0 - std::pow(f, k));
    prev = s[i];
  }
  return mean;
}

}  // namespace forkjoin
