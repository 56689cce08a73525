#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "forkjoin/association.hpp"
#include "forkjoin/bounds.hpp"
#include "forkjoin/combinatorics.hpp"
#include "forkjoin/harness/config.hpp"
#include "forkjoin/harness/output.hpp"
#include "forkjoin/harness/parallel.hpp"
#include "forkjoin/metrics.hpp"
#include "forkjoin/random.hpp"
#include "forkjoin/simulator.hpp"

namespace forkjoin {

using json = nlohmann::ordered_json;

struct RunOptions {
  std::optional<ScenarioKind> kind;
  std::optional<std::uint64_t> seed;
  std::optional<int> replications;
  std::optional<std::string> output_dir;
  unsigned threads = 1;
};

struct OutputFile {
  std::string file;  // relative to the run directory
  std::string kind;  // "ccdf", "table" or "summary"
  int n = 0;
  int k = 0;
  std::string crc32;
};

struct ResultManifest {
  std::string scenario;
  std::uint64_t seed = 0;
  std::filesystem::path directory;
  std::vector<OutputFile> outputs;
  json config;
  json summary;
  std::uint64_t jobs_simulated = 0;
  double wall_clock_seconds = 0.0;
  bool all_passed = true;

  std::filesystem::path manifest_path() const { return directory / "manifest.json"; }
};

// Stream indices: system s of a scenario owns indices [s * 2^32, (s + 1) * 2^32).
// The top slot of each block feeds the auxiliary single-queue run for an
// empirical task-delay cdf.
inline constexpr std::uint64_t kStreamBlock = std::uint64_t{1} << 32;
inline constexpr std::uint64_t kAuxStream = kStreamBlock - 1;
inline constexpr std::uint64_t kEmpiricalFSamples = 1'000'000;

// Resolved settings of one fork-join system within a sweep.
struct SystemRun {
  int n = 0;
  int k = 0;
  CcdfEstimate ccdf;
  std::vector<double> bound;
  SupDistance sup;
  MeanEstimate mean;
  double bound_mean = 0.0;
  std::uint64_t jobs = 0;
  int stationarity_warnings = 0;
};

inline TaskDelayCdf task_delay_law(const SystemConfig& cfg, std::uint64_t system_index) {
  if (const auto* e = std::get_if<Exponential>(&cfg.service().law()))
    return TaskDelayCdf::mm1(cfg.lambda(), e->rate);
  RandomStream rng(cfg.seed(), system_index * kStreamBlock + kAuxStream);
  return TaskDelayCdf::empirical(simulate_single_queue(cfg.lambda(), cfg.service(), kEmpiricalFSamples, rng));
}

inline SystemRun run_system(const SystemConfig& cfg, std::uint64_t system_index, int replications,
                            unsigned threads, std::size_t grid_points) {
  const auto results = run_replications(static_cast<std::size_t>(replications), threads, [&](std::size_t r) {
    RandomStream rng(cfg.seed(), system_index * kStreamBlock + r);
    return simulate_forkjoin(cfg, rng);
  });
  SystemRun run;
  run.n = cfg.n();
  run.k = cfg.k();
  std::vector<double> delays;
  for (const auto& res : results) {
    delays.insert(delays.end(), res.job_delays.begin(), res.job_delays.end());
    run.jobs += res.jobs_simulated;
    run.stationarity_warnings += res.stationarity_warning ? 1 : 0;
  }
  const TaskDelayCdf law = task_delay_law(cfg, system_index);
  const auto grid = ccdf_grid(law, cfg.k(), grid_points);
  run.ccdf = estimate_ccdf(delays, grid);
  run.bound.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) run.bound[i] = independence_ccdf(law, cfg.k(), grid[i]);
  // Sup distance against the tabulated bound so it can be recomputed from the CSV alone.
  const auto& table = run.bound;
  const auto& taus = run.ccdf.grid;
  run.sup = sup_distance(run.ccdf, [&](double tau) {
    const auto it = std::lower_bound(taus.begin(), taus.end(), tau);
    return table[static_cast<std::size_t>(it - taus.begin())];
  });
  run.mean = estimate_mean(delays);
  run.bound_mean = independence_mean(law, cfg.k());
  return run;
}

inline json system_summary(const SystemRun& run) {
  json j;
  j["n"] = run.n;
  j["k"] = run.k;
  j["jobs_simulated"] = run.jobs;
  j["recorded_jobs"] = run.ccdf.sample_count;
  j["mean_delay"] = run.mean.mean;
  j["mean_delay_ci_halfwidth"] = run.mean.ci_halfwidth;
  j["bound_mean"] = run.bound_mean;
  j["relative_mean_gap"] = (run.bound_mean - run.mean.mean) / run.bound_mean;
  j["sup_distance"] = run.sup.max_abs_gap;
  j["tau_at_sup"] = run.sup.tau_at_max_gap;
  j["max_signed_excess"] = run.sup.max_signed_excess;
  j["max_excess_over_3ci"] = run.sup.max_excess_over_ci;
  j["dominated"] = run.sup.max_excess_over_ci <= 0.0;
  j["stationarity_warnings"] = run.stationarity_warnings;
  return j;
}

namespace detail {

struct ScenarioOutput {
  json summary;
  std::vector<std::pair<OutputFile, std::string>> files;  // metadata + bytes
  std::uint64_t jobs = 0;
  bool passed = true;
};

inline std::string ccdf_file_name(int n, int k) {
  return "ccdf_n" + std::to_string(n) + "_k" + std::to_string(k) + ".csv";
}

inline std::string rational_string(const Rational& r) {
  if (denominator(r) == 1) return numerator(r).str();
  return numerator(r).str() + "/" + denominator(r).str();
}

inline SystemConfig system_with(const SystemConfig& base, int n, int k) {
  return SystemConfig(n, k, base.lambda(), base.service(), base.seed(), base.warmup_fraction(),
                      base.horizon_jobs());
}

inline const std::vector<Rational>& default_exponents() {
  static const std::vector<Rational> e{Rational(1, 3), Rational(1, 2), Rational(2, 3), Rational(9, 10)};
  return e;
}

// Distinct (n, k) systems of a k = ceil(n^c) sweep, each with the exponents that map to it.
inline std::vector<std::pair<std::pair<int, int>, std::vector<Rational>>> sweep_systems(
    const std::vector<int>& ns, const std::vector<Rational>& exponents) {
  std::vector<std::pair<std::pair<int, int>, std::vector<Rational>>> out;
  for (const int n : ns) {
    for (const auto& c : exponents) {
      const int k = std::min(n, ceil_power(n, c));
      auto it = std::find_if(out.begin(), out.end(), [&](const auto& e) { return e.first == std::pair{n, k}; });
      if (it == out.end())
        out.push_back({{n, k}, {c}});
      else
        it->second.push_back(c);
    }
  }
  return out;
}

inline void add_ccdf_file(ScenarioOutput& out, const SystemRun& run) {
  const std::string name = ccdf_file_name(run.n, run.k);
  const std::string bytes = ccdf_csv(run.ccdf, run.bound);
  out.files.push_back({{name, "ccdf", run.n, run.k, crc32_hex(bytes)}, bytes});
}

inline ScenarioOutput run_sweep(const ParsedConfig& cfg, const SystemConfig& base, int reps, unsigned threads,
                                const std::vector<std::pair<std::pair<int, int>, std::vector<Rational>>>& systems,
                                bool scaling) {
  ScenarioOutput out;
  json results = json::array();
  for (std::size_t s = 0; s < systems.size(); ++s) {
    const auto [n, k] = systems[s].first;
    const SystemConfig sys = system_with(base, n, k);
    const SystemRun run = run_system(sys, s, reps, threads, cfg.scenario.params.grid_points);
    json j = system_summary(run);
    if (!systems[s].second.empty()) {
      json ex = json::array();
      for (const auto& c : systems[s].second) ex.push_back(rational_string(c));
      j["k_exponents"] = ex;
    }
    if (scaling) {
      // Coupling horizon sqrt(n) / k and the resulting divergence probability and rate deficit.
      const double tau_n = std::sqrt(static_cast<double>(n)) / static_cast<double>(k);
      j["coupling_horizon"] = tau_n;
      j["divergence_probability"] = pe_exact(n, k, sys.job_rate(), tau_n);
      j["rate_deficit"] = sys.lambda() - lambda_tilde(CombinatorialContext::for_system(n, k), sys.lambda());
    }
    out.passed = out.passed && run.sup.max_excess_over_ci <= 0.0;
    out.jobs += run.jobs;
    add_ccdf_file(out, run);
    results.push_back(std::move(j));
  }
  out.summary["systems"] = std::move(results);
  out.summary["verdicts"] = {{"bound_dominates_all", out.passed}};
  return out;
}

inline std::vector<std::uint64_t> split_samples(std::uint64_t total, int reps) {
  std::vector<std::uint64_t> per(static_cast<std::size_t>(reps), total / static_cast<std::uint64_t>(reps));
  for (std::uint64_t i = 0; i < total % static_cast<std::uint64_t>(reps); ++i) ++per[i];
  return per;
}

inline ScenarioOutput run_coupling(const ParsedConfig& cfg, const SystemConfig& sys, int reps, unsigned threads) {
  const double tau = cfg.scenario.params.tau;
  const std::uint64_t samples = cfg.scenario.params.samples.value_or(100'000);
  const auto per = split_samples(samples, reps);
  struct Tally {
    std::uint64_t runs = 0, diverged = 0, differs = 0, inconsistent = 0, killed = 0, jobs = 0;
  };
  const auto tallies = run_replications(per.size(), threads, [&](std::size_t r) {
    RandomStream rng(sys.seed(), r);
    Tally t;
    for (std::uint64_t i = 0; i < per[r]; ++i) {
      const CouplingTrace trace = simulate_coupled(sys, tau, rng);
      ++t.runs;
      t.diverged += trace.diverged;
      t.differs += trace.first_block_differs;
      t.inconsistent += !trace.consistent;
      t.killed += trace.killed_tasks;
      t.jobs += trace.jobs;
    }
    return t;
  });
  Tally all;
  std::string csv = "replication,runs,diverged,first_block_differs,inconsistent,killed_tasks\n";
  for (std::size_t r = 0; r < tallies.size(); ++r) {
    const Tally& t = tallies[r];
    all.runs += t.runs;
    all.diverged += t.diverged;
    all.differs += t.differs;
    all.inconsistent += t.inconsistent;
    all.killed += t.killed;
    all.jobs += t.jobs;
    csv += std::to_string(r) + "," + std::to_string(t.runs) + "," + std::to_string(t.diverged) + "," +
           std::to_string(t.differs) + "," + std::to_string(t.inconsistent) + "," + std::to_string(t.killed) + "\n";
  }
  const double freq = static_cast<double>(all.diverged) / static_cast<double>(all.runs);
  const double se = std::sqrt(freq * (1.0 - freq) / static_cast<double>(all.runs));
  const double pe = pe_exact(sys.n(), sys.k(), sys.job_rate(), tau);
  const double pe_se = std::sqrt(pe * (1.0 - pe) / static_cast<double>(all.runs));
  ScenarioOutput out;
  out.jobs = all.jobs;
  const bool within = std::abs(freq - pe) <= 3.0 * std::max(se, pe_se);
  const bool dominated = all.differs <= all.diverged;
  const bool consistent = all.inconsistent == 0;
  out.passed = within && dominated && consistent;
  out.summary = {{"n", sys.n()},
                 {"k", sys.k()},
                 {"job_rate", sys.job_rate()},
                 {"horizon", tau},
                 {"runs", all.runs},
                 {"p_select_le1", to_double(p_select_le1_exact(sys.n(), sys.k()))},
                 {"divergence_frequency", freq},
                 {"standard_error", se},
                 {"pe_exact", pe},
                 {"first_block_differs_frequency", static_cast<double>(all.differs) / static_cast<double>(all.runs)},
                 {"killed_tasks", all.killed},
                 {"verdicts",
                  {{"frequency_within_3se", within}, {"differs_at_most_diverged", dominated}, {"coupling_consistent", consistent}}}};
  out.files.push_back({{"coupling.csv", "table", sys.n(), sys.k(), crc32_hex(csv)}, csv});
  return out;
}

inline ScenarioOutput run_busy(const ParsedConfig& cfg, const SystemConfig& sys, int reps, unsigned threads) {
  const std::uint64_t samples = cfg.scenario.params.samples.value_or(100'000);
  const auto per = split_samples(samples, reps);
  const auto results = run_replications(per.size(), threads, [&](std::size_t r) {
    RandomStream rng(sys.seed(), r);
    const auto res = busy_period_experiment(sys.lambda(), sys.service(), per[r], rng);
    double sum = 0.0, sum_sq = 0.0, work = 0.0;
    for (const auto& s : res.samples) {
      sum += s.passage_time;
      sum_sq += s.passage_time * s.passage_time;
      work += s.inspection_workload;
    }
    return std::array<double, 3>{sum, sum_sq, work};
  });
  double sum = 0.0, sum_sq = 0.0, work = 0.0;
  std::string csv = "replication,samples,mean_passage_time,mean_inspection_workload\n";
  for (std::size_t r = 0; r < results.size(); ++r) {
    sum += results[r][0];
    sum_sq += results[r][1];
    work += results[r][2];
    const auto cnt = static_cast<double>(per[r]);
    csv += std::to_string(r) + "," + std::to_string(per[r]) + "," + format_double(cnt > 0 ? results[r][0] / cnt : 0.0) +
           "," + format_double(cnt > 0 ? results[r][2] / cnt : 0.0) + "\n";
  }
  const auto count = static_cast<double>(samples);
  const double mean = sum / count;
  const double se = std::sqrt(std::max(0.0, sum_sq / count - mean * mean) / (count - 1.0));
  const double expected = expected_busy_period(sys.lambda(), sys.service());
  ScenarioOutput out;
  const double rel = std::abs(mean - expected) / expected;
  out.passed = rel <= 0.05;
  out.summary = {{"lambda", sys.lambda()},
                 {"service", sys.service().name()},
                 {"g2", sys.service().second_moment()},
                 {"samples", samples},
                 {"mean_passage_time", mean},
                 {"standard_error", se},
                 {"mean_inspection_workload", work / count},
                 {"expected", expected},
                 {"relative_error", rel},
                 {"verdicts", {{"within_5_percent", out.passed}}}};
  out.files.push_back({{"busy.csv", "table", 0, 0, crc32_hex(csv)}, csv});
  return out;
}

inline Rational lambda_rational(const ParsedConfig& cfg) {
  if (const auto* e = cfg.document.find("system", "lambda")) return *parse_rational(e->value);
  return Rational(2, 3);
}

inline json verdict_json(const AssociationVerdict& v) {
  json j;
  j["associated"] = v.associated;
  j["pairs_checked"] = v.pairs_checked;
  if (v.counterexample) {
    const auto& c = *v.counterexample;
    char f[16], g[16];
    std::snprintf(f, sizeof f, "0x%08x", c.f.table);
    std::snprintf(g, sizeof g, "0x%08x", c.g.table);
    j["counterexample"] = {{"f_table", f},
                           {"g_table", g},
                           {"expected_product", rational_string(c.expected_product)},
                           {"product_of_means", rational_string(c.product_of_means)},
                           {"gap", rational_string(c.gap())}};
  } else {
    j["counterexample"] = nullptr;
  }
  return j;
}

// Verdicts for each oversampling rate. A rate at or above the threshold must
// give association; beta = 0 with 2 <= k < n must not.
inline json association_report(int n, int k, const Rational& lambda, const std::vector<std::string>& betas,
                               const AssociationOptions& options, bool& passed) {
  const Rational job_rate = lambda * n / k;
  const Rational threshold = beta_threshold(n, k, job_rate);
  json report;
  report["n"] = n;
  report["k"] = k;
  report["job_rate"] = rational_string(job_rate);
  report["threshold"] = rational_string(threshold);
  report["threshold_over_job_rate"] = rational_string(threshold / job_rate);
  report["block_hit_probability"] = rational_string(block_hit_probability(n, k));
  json cases = json::array();
  passed = true;
  for (const auto& text : betas) {
    const Rational beta = text == "threshold" ? threshold : *parse_rational(text) * job_rate;
    const auto dist = arrival_pattern_dist(n, k, job_rate, beta);
    const auto verdict = check_association(dist, options);
    json c = {{"beta", rational_string(beta)}, {"beta_over_job_rate", rational_string(beta / job_rate)}};
    c.update(verdict_json(verdict));
    json covs = json::array();
    for (const auto& pc : covariance_check(dist))
      covs.push_back({{"i", pc.i + 1}, {"j", pc.j + 1}, {"covariance", rational_string(pc.covariance)}});
    c["covariances"] = covs;
    std::optional<bool> expected;
    if (beta >= threshold) expected = true;
    else if (beta == 0 && k >= 2 && k < n) expected = false;
    if (expected) {
      c["expected_associated"] = *expected;
      c["matches_expectation"] = verdict.associated == *expected;
      passed = passed && verdict.associated == *expected;
    }
    cases.push_back(std::move(c));
  }
  report["cases"] = std::move(cases);
  return report;
}

inline ScenarioOutput run_assoc(const ParsedConfig& cfg, const SystemConfig& sys, unsigned threads) {
  std::vector<std::string> betas = cfg.scenario.params.betas;
  if (betas.empty()) betas = {"0", "threshold"};
  AssociationOptions options;
  options.threads = threads;
  ScenarioOutput out;
  bool passed = true;
  out.summary = association_report(sys.n(), sys.k(), lambda_rational(cfg), betas, options, passed);
  out.summary["verdicts"] = {{"matches_theory", passed}};
  out.passed = passed;
  return out;
}

inline ScenarioOutput run_theorem3(const ParsedConfig& cfg, const SystemConfig& base, int reps, unsigned threads) {
  const auto* e = std::get_if<Exponential>(&base.service().law());
  if (!e) throw ConfigError("theorem3 needs exponential service, got " + base.service().name());
  const double mu = e->rate;
  std::vector<int> ns = cfg.scenario.params.n_values;
  if (ns.empty()) ns = {8, 16, 32};
  const auto& p = cfg.scenario.params;
  const auto per = split_samples(p.snapshots, reps);
  const Rational lambda = lambda_rational(cfg);
  const Rational mu_r = parse_rational(format_double(mu)).value();
  const Rational rho = lambda / mu_r;

  ScenarioOutput out;
  json systems = json::array();
  std::string csv = "n,k,state_1,state_2,probability,product_probability\n";
  std::optional<double> previous_tv;
  double previous_tv_err = 0.0;
  bool monotone = true;
  for (std::size_t s = 0; s < ns.size(); ++s) {
    const int n = ns[s];
    const int k = n / 2;
    if (k < 2) throw ConfigError("theorem3 needs n >= 4 so that k = n/2 >= 2");
    const SystemConfig sys = system_with(base, n, k);
    const auto batches = run_replications(per.size(), threads, [&](std::size_t r) {
      RandomStream rng(sys.seed(), s * kStreamBlock + r);
      return sample_queue_lengths(sys, p.interval / mu, per[r], 2, rng);
    });
    QueueSnapshots merged;
    merged.m = 2;
    merged.interval = p.interval / mu;
    for (const auto& b : batches) merged.lengths.insert(merged.lengths.end(), b.lengths.begin(), b.lengths.end());
    const auto probs = balance_probabilities(n, k);
    const Rational job_rate = lambda * n / k;
    const auto empirical = balance_residual_estimate(merged, probs, to_double(job_rate), mu);
    const Rational product = balance_residual(ProductGeometricPmf{rho}, probs.p1, probs.p2, job_rate, mu_r);
    const Rational frac = Rational(k, n);
    const auto lim = balance_limits(frac);
    const Rational limit_product = balance_residual(ProductGeometricPmf{rho}, lim.p1, lim.p2, Rational(lambda / frac), mu_r);
    const auto joint = joint_pmf(merged, 2);
    const auto tv = tv_distance(joint);
    // TV standard error from batch-wise estimates on the same box, for the
    // monotonicity verdict. Short batches may spill past the box, so the guard is off.
    std::vector<double> tv_batches;
    const std::size_t tv_batch_count = 10;
    const std::size_t rows = merged.count() / tv_batch_count;
    for (std::size_t b = 0; b < tv_batch_count; ++b) {
      const std::span<const std::uint32_t> part(merged.lengths.data() + b * rows * 2, rows * 2);
      tv_batches.push_back(tv_distance(joint_pmf(part, 2, 2, joint.q_max), 1.0).distance);
    }
    const double tv_se = detail::sample_sd(tv_batches) / std::sqrt(static_cast<double>(tv_batch_count));

    const bool residual_ok = std::abs(empirical.value) <= 3.0 * empirical.standard_error;
    const bool product_separated = std::abs(to_double(product)) >= 10.0 * empirical.standard_error;
    const bool tv_positive = tv.distance > 0.0;
    if (previous_tv && tv.distance + 3.0 * std::hypot(tv_se, previous_tv_err) < *previous_tv) monotone = false;
    previous_tv = tv.distance;
    previous_tv_err = tv_se;
    out.passed = out.passed && residual_ok && product_separated && tv_positive;

    const ProductGeometricPmf prod{rho};
    for (int a = 0; a <= 2; ++a)
      for (int b = 0; b <= 2; ++b)
        csv += std::to_string(n) + "," + std::to_string(k) + "," + std::to_string(a) + "," + std::to_string(b) + "," +
               format_double(joint.pmf(a, b)) + "," + format_double(to_double(prod(a, b))) + "\n";
    systems.push_back({{"n", n},
                       {"k", k},
                       {"snapshots", merged.count()},
                       {"p0", rational_string(probs.p0)},
                       {"p1", rational_string(probs.p1)},
                       {"p2", rational_string(probs.p2)},
                       {"empirical_residual", empirical.value},
                       {"empirical_residual_se", empirical.standard_error},
                       {"product_residual", to_double(product)},
                       {"product_residual_exact", rational_string(product)},
                       {"limit_product_residual", rational_string(limit_product)},
                       {"epsilon", to_double(epsilon_theorem3(frac, lambda, mu_r))},
                       {"tv_distance", tv.distance},
                       {"tv_standard_error", tv_se},
                       {"tv_truncation_error", tv.truncation_error},
                       {"q_max", joint.q_max},
                       {"residual_within_3se", residual_ok},
                       {"product_residual_at_least_10se", product_separated}});
  }
  out.passed = out.passed && monotone;
  out.summary["systems"] = std::move(systems);
  out.summary["verdicts"] = {{"all_systems_pass", out.passed}, {"tv_nondecreasing_within_3se", monotone}};
  out.files.push_back({{"theorem3_pmf.csv", "table", 0, 0, crc32_hex(csv)}, csv});
  return out;
}

inline ScenarioOutput run_single_queue(const ParsedConfig& cfg, const SystemConfig& sys, int reps, unsigned threads) {
  const std::uint64_t samples = cfg.scenario.params.samples.value_or(1'000'000);
  const auto per = split_samples(samples, reps);
  const auto parts = run_replications(per.size(), threads, [&](std::size_t r) {
    RandomStream rng(sys.seed(), r);
    return simulate_single_queue(sys.lambda(), sys.service(), per[r], rng);
  });
  std::vector<double> delays;
  for (const auto& part : parts) delays.insert(delays.end(), part.begin(), part.end());
  ScenarioOutput out;
  out.jobs = samples;
  const auto* e = std::get_if<Exponential>(&sys.service().law());
  const TaskDelayCdf law = e ? TaskDelayCdf::mm1(sys.lambda(), e->rate) : TaskDelayCdf::empirical(delays);
  const auto grid = ccdf_grid(law, 1, cfg.scenario.params.grid_points);
  const auto ccdf = estimate_ccdf(delays, grid);
  std::vector<double> bound(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) bound[i] = e ? 1.0 - law(grid[i]) : std::nan("");
  SystemRun run;
  run.n = 1;
  run.k = 1;
  run.ccdf = ccdf;
  run.bound = bound;
  add_ccdf_file(out, run);
  const auto mean = estimate_mean(delays);
  out.summary = {{"lambda", sys.lambda()},
                 {"service", sys.service().name()},
                 {"samples", samples},
                 {"mean_delay", mean.mean},
                 {"mean_delay_ci_halfwidth", mean.ci_halfwidth}};
  if (e) {
    std::vector<double> sorted = delays;
    std::sort(sorted.begin(), sorted.end());
    double ks = 0.0;
    const auto size = static_cast<double>(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const double f = law(sorted[i]);
      ks = std::max({ks, std::abs(static_cast<double>(i + 1) / size - f), std::abs(f - static_cast<double>(i) / size)});
    }
    out.summary["kolmogorov_distance"] = ks;
    out.summary["analytic_mean"] = 1.0 / (e->rate - sys.lambda());
    out.passed = ks <= 0.005;
    out.summary["verdicts"] = {{"kolmogorov_within_0.005", out.passed}};
  } else {
    out.summary["verdicts"] = json::object();
  }
  return out;
}

inline json config_snapshot(const SystemConfig& sys, const Scenario& sc, const ParsedConfig& cfg) {
  json j;
  j["system"] = {{"n", sys.n()},
                 {"k", sys.k()},
                 {"lambda", sys.lambda()},
                 {"seed", sys.seed()},
                 {"warmup_fraction", sys.warmup_fraction()},
                 {"horizon_jobs", sys.horizon_jobs()}};
  json service = {{"type", sys.service().name()}, {"mean", sys.service().mean()}, {"second_moment", sys.service().second_moment()}};
  std::visit(
      [&](const auto& law) {
        using T = std::decay_t<decltype(law)>;
        if constexpr (std::is_same_v<T, Exponential>) service["rate"] = law.rate;
        else if constexpr (std::is_same_v<T, Deterministic>) service["value"] = law.value;
        else if constexpr (std::is_same_v<T, HyperExponential>) {
          service["weights"] = law.weights;
          service["rates"] = law.rates;
        } else {
          service["alpha"] = law.alpha;
          service["xmin"] = law.lower;
          service["xmax"] = law.upper;
        }
      },
      sys.service().law());
  j["service"] = service;
  const auto& p = sc.params;
  json scen = {{"name", scenario_name(*sc.kind)}, {"replications", sc.replications}};
  if (!p.n_values.empty()) scen["n_values"] = p.n_values;
  if (!p.k_exponents.empty()) {
    json ex = json::array();
    for (const auto& c : p.k_exponents) ex.push_back(rational_string(c));
    scen["k_exponents"] = ex;
  }
  if (!p.pairs.empty()) {
    json pairs = json::array();
    for (const auto& [n, k] : p.pairs) pairs.push_back({n, k});
    scen["pairs"] = pairs;
  }
  if (!p.betas.empty()) scen["betas"] = p.betas;
  scen["tau"] = p.tau;
  if (p.samples) scen["samples"] = *p.samples;
  scen["interval"] = p.interval;
  scen["snapshots"] = p.snapshots;
  scen["grid_points"] = p.grid_points;
  j["scenario"] = scen;
  j["output"] = {{"plotdata", sc.emit_plotdata}};
  j["origin"] = cfg.document.origin;
  return j;
}

}  // namespace detail

// Tidy plot table assembled from a manifest's CCDF files.
inline std::string emit_plotdata(const std::filesystem::path& manifest_path);

// Runs one scenario end to end, writing data files, summary.json and
// manifest.json into the output directory. All writes happen on the calling
// thread after the replications finish.
inline ResultManifest run_scenario(const ParsedConfig& parsed, const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  ParsedConfig cfg = parsed;
  if (options.kind) {
    if (cfg.scenario.kind && *cfg.scenario.kind != *options.kind)
      throw ConfigError("scenario '" + scenario_name(*options.kind) + "' requested but config names '" +
                        scenario_name(*cfg.scenario.kind) + "'");
    cfg.scenario.kind = options.kind;
  }
  if (!cfg.scenario.kind) throw ConfigError("no scenario given");
  if (options.replications) {
    if (*options.replications < 1) throw ConfigError("--reps must be >= 1");
    cfg.scenario.replications = *options.replications;
  }
  if (options.output_dir) cfg.scenario.output_dir = *options.output_dir;
  const SystemConfig& s0 = cfg.system;
  const SystemConfig sys(s0.n(), s0.k(), s0.lambda(), s0.service(), options.seed.value_or(s0.seed()),
                         s0.warmup_fraction(), s0.horizon_jobs());
  const int reps = cfg.scenario.replications;
  const unsigned threads = options.threads;
  const auto& p = cfg.scenario.params;

  detail::ScenarioOutput out;
  switch (*cfg.scenario.kind) {
    case ScenarioKind::figure1: {
      const auto ns = p.n_values.empty() ? std::vector<int>{4, 64, 1024} : p.n_values;
      const auto& ex = p.k_exponents.empty() ? detail::default_exponents() : p.k_exponents;
      out = detail::run_sweep(cfg, sys, reps, threads, detail::sweep_systems(ns, ex), false);
      break;
    }
    case ScenarioKind::scaling: {
      const auto ns = p.n_values.empty() ? std::vector<int>{16, 64, 256, 1024} : p.n_values;
      const auto& ex = p.k_exponents.empty() ? detail::default_exponents() : p.k_exponents;
      out = detail::run_sweep(cfg, sys, reps, threads, detail::sweep_systems(ns, ex), true);
      break;
    }
    case ScenarioKind::dominance: {
      auto pairs = p.pairs;
      if (pairs.empty()) pairs = {{64, 8}, {256, 16}, {8, 8}, {16, 16}};
      std::vector<std::pair<std::pair<int, int>, std::vector<Rational>>> systems;
      for (const auto& pr : pairs) systems.push_back({pr, {}});
      out = detail::run_sweep(cfg, sys, reps, threads, systems, false);
      break;
    }
    case ScenarioKind::coupling: out = detail::run_coupling(cfg, sys, reps, threads); break;
    case ScenarioKind::busy: out = detail::run_busy(cfg, sys, reps, threads); break;
    case ScenarioKind::assoc: out = detail::run_assoc(cfg, sys, threads); break;
    case ScenarioKind::theorem3: out = detail::run_theorem3(cfg, sys, reps, threads); break;
    case ScenarioKind::single_queue: out = detail::run_single_queue(cfg, sys, reps, threads); break;
  }

  ResultManifest manifest;
  manifest.scenario = scenario_name(*cfg.scenario.kind);
  manifest.seed = sys.seed();
  manifest.directory = cfg.scenario.output_dir;
  manifest.config = detail::config_snapshot(sys, cfg.scenario, cfg);
  manifest.jobs_simulated = out.jobs;
  manifest.all_passed = out.passed;

  std::filesystem::create_directories(manifest.directory);
  for (auto& [meta, bytes] : out.files) {
    write_file(manifest.directory / meta.file, bytes);
    manifest.outputs.push_back(meta);
  }
  json summary;
  summary["scenario"] = manifest.scenario;
  summary["seed"] = manifest.seed;
  summary["results"] = out.summary;
  summary["all_passed"] = out.passed;
  const std::string summary_bytes = summary.dump(2) + "\n";
  write_file(manifest.directory / "summary.json", summary_bytes);
  manifest.outputs.push_back({"summary.json", "summary", 0, 0, crc32_hex(summary_bytes)});
  manifest.summary = summary;

  manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json m;
  m["scenario"] = manifest.scenario;
  m["seed"] = manifest.seed;
  m["config"] = manifest.config;
  json files = json::array();
  for (const auto& f : manifest.outputs) {
    json e = {{"file", f.file}, {"kind", f.kind}, {"crc32", f.crc32}};
    if (f.kind == "ccdf") {
      e["n"] = f.n;
      e["k"] = f.k;
    }
    files.push_back(e);
  }
  m["outputs"] = files;
  m["jobs_simulated"] = manifest.jobs_simulated;
  m["threads"] = threads;
  m["wall_clock_seconds"] = manifest.wall_clock_seconds;
  m["all_passed"] = manifest.all_passed;
  write_file(manifest.manifest_path(), m.dump(2) + "\n");

  if (cfg.scenario.emit_plotdata) {
    const std::string plot = emit_plotdata(manifest.manifest_path());
    write_file(manifest.directory / "plotdata.csv", plot);
  }
  return manifest;
}

inline std::string emit_plotdata(const std::filesystem::path& manifest_path) {
  json m;
  try {
    m = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  const auto dir = manifest_path.parent_path();
  const std::string scenario = m.value("scenario", "");
  std::string out = "scenario,n,k,tau,series,value,ci\n";
  std::vector<std::string> missing;
  std::vector<json> ccdfs;
  if (m.contains("outputs"))
    for (const auto& f : m["outputs"])
      if (f.value("kind", "") == "ccdf") {
        if (!std::filesystem::exists(dir / f["file"].get<std::string>()))
          missing.push_back(f["file"].get<std::string>());
        ccdfs.push_back(f);
      }
  if (!missing.empty()) {
    std::string list;
    for (const auto& f : missing) list += (list.empty() ? "" : ", ") + (dir / f).string();
    throw std::runtime_error("plotdata: missing data files: " + list);
  }
  for (const auto& f : ccdfs) {
    const auto table = parse_ccdf_csv(read_file(dir / f["file"].get<std::string>()));
    const std::string prefix = scenario + "," + std::to_string(f["n"].get<int>()) + "," +
                               std::to_string(f["k"].get<int>()) + ",";
    for (std::size_t i = 0; i < table.tau.size(); ++i) {
      const std::string tau = format_double(table.tau[i]);
      out += prefix + tau + ",empirical," + format_double(table.survival[i]) + "," +
             format_double(table.ci_halfwidth[i]) + "\n";
      out += prefix + tau + ",bound," + format_double(table.bound[i]) + ",0\n";
    }
  }
  return out;
}

}  // namespace forkjoin
