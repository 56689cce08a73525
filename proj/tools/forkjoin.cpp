#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "forkjoin/association.hpp"
#include "forkjoin/harness/config.hpp"
#include "forkjoin/harness/scenarios.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitCheck = 3;

int run_command(const std::string& scenario, const std::string& config_path, std::optional<std::uint64_t> seed,
                std::optional<int> reps, std::optional<std::string> out, std::optional<int> threads, bool check) {
  using namespace forkjoin;
  const auto kind = scenario_from_name(scenario);
  if (!kind) {
    std::cerr << "error: unknown scenario '" << scenario << "'\n";
    return kExitConfig;
  }
  ParsedConfig cfg = config_path.empty() ? parse_config_text("", "<defaults>") : parse_config(config_path);
  RunOptions opts;
  opts.kind = kind;
  opts.seed = seed;
  opts.replications = reps;
  opts.output_dir = out;
  opts.threads = resolve_threads(threads);
  const ResultManifest m = run_scenario(cfg, opts);
  std::cout << "scenario " << m.scenario << " seed " << m.seed << ": wrote " << m.outputs.size()
            << " files to " << m.directory.string() << " (" << m.wall_clock_seconds << " s)\n";
  std::cout << (m.all_passed ? "checks passed" : "checks FAILED") << "\n";
  if (check && !m.all_passed) return kExitCheck;
  return 0;
}

int verify_assoc(int n, int k, const std::string& beta_text, const std::string& lambda_text, bool allow_k5,
                 std::optional<int> threads) {
  using namespace forkjoin;
  const auto lambda = parse_rational(lambda_text);
  if (!lambda || *lambda <= 0) {
    std::cerr << "error: --lambda must be a positive rational, got '" << lambda_text << "'\n";
    return kExitConfig;
  }
  if (k < 1 || k > n) {
    std::cerr << "error: need 1 <= k <= n (k tasks go to distinct queues), got n=" << n << " k=" << k << "\n";
    return kExitConfig;
  }
  if (beta_text != "threshold") {
    const auto b = parse_rational(beta_text);
    if (!b || *b < 0) {
      std::cerr << "error: --beta must be 'threshold' or a non-negative rational multiple of the job rate\n";
      return kExitConfig;
    }
  }
  AssociationOptions opts;
  opts.allow_width_five = allow_k5;
  opts.threads = resolve_threads(threads);
  bool matches = true;
  const auto report = detail::association_report(n, k, *lambda, {beta_text}, opts, matches);
  std::cout << report.dump(2) << "\n";
  const auto& c = report["cases"][0];
  return c["associated"].get<bool>() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Limited fork-join queue simulator and bound checks"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run a scenario and write CSV/JSON results");
  std::string scenario, config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> reps, threads;
  std::optional<std::string> out;
  bool check = false;
  run->add_option("scenario", scenario,
                  "figure1 | dominance | coupling | busy | assoc | theorem3 | scaling | single-queue")
      ->required();
  run->add_option("--config", config_path, "INI config file");
  run->add_option("--seed", seed, "master seed (overrides the config)");
  run->add_option("--reps", reps, "replications (overrides the config)");
  run->add_option("--out", out, "output directory (overrides the config)");
  run->add_option("--threads", threads, "worker threads (default: FORKJOIN_THREADS or all cores)");
  run->add_flag("--check", check, "exit 3 if any scenario check fails");

  auto* va = app.add_subcommand("verify-assoc", "exact association check of the arrival pattern");
  int n = 0, k = 0;
  std::string beta = "threshold", lambda = "2/3";
  bool allow_k5 = false;
  va->add_option("--n", n, "number of queues")->required();
  va->add_option("--k", k, "tasks per job")->required();
  va->add_option("--beta", beta, "'threshold' or a multiple of the job rate, e.g. 0 or 19/6");
  va->add_option("--lambda", lambda, "per-queue arrival rate (rational)");
  va->add_flag("--allow-k5", allow_k5, "permit the k = 5 pair scan");
  va->add_option("--threads", threads, "worker threads");

  auto* pd = app.add_subcommand("plotdata", "tidy plot table from a result manifest");
  std::string manifest;
  pd->add_option("manifest", manifest, "path to manifest.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return run_command(scenario, config_path, seed, reps, out, threads, check);
    if (*va) return verify_assoc(n, k, beta, lambda, allow_k5, threads);
    if (*pd) {
      std::cout << forkjoin::emit_plotdata(manifest);
      return 0;
    }
  } catch (const forkjoin::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
