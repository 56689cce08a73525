#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "forkjoin/combinatorics.hpp"
#include "forkjoin/service.hpp"
#include "forkjoin/system_config.hpp"

namespace forkjoin {

// Config problem tied to a file position.
class ConfigFileError : public ConfigError {
 public:
  ConfigFileError(const std::string& origin, int line, const std::string& what)
      : ConfigError(origin + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct ConfigEntry {
  std::string value;
  int line = 0;
};

// Sections of `key = value` lines. '#' and ';' start comments.
struct IniDocument {
  std::string origin;
  std::map<std::string, std::map<std::string, ConfigEntry>> sections;

  const ConfigEntry* find(const std::string& section, const std::string& key) const {
    const auto s = sections.find(section);
    if (s == sections.end()) return nullptr;
    const auto e = s->second.find(key);
    return e == s->second.end() ? nullptr : &e->second;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

inline IniDocument parse_ini(std::istream& in, const std::string& origin) {
  static const std::set<std::string> known_sections{"system", "service", "scenario", "output"};
  IniDocument doc;
  doc.origin = origin;
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto cut = raw.find_first_of("#;");
    const std::string text = detail::trim(cut == std::string::npos ? raw : raw.substr(0, cut));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ConfigFileError(origin, line, "malformed section header '" + text + "'");
      section = detail::trim(text.substr(1, text.size() - 2));
      if (!known_sections.contains(section))
        throw ConfigFileError(origin, line,
                              "unknown section [" + section + "]; expected system, service, scenario or output");
      doc.sections[section];
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigFileError(origin, line, "expected 'key = value', got '" + text + "'");
    if (section.empty()) throw ConfigFileError(origin, line, "key outside of any [section]");
    const std::string key = detail::trim(text.substr(0, eq));
    const std::string value = detail::trim(text.substr(eq + 1));
    if (key.empty()) throw ConfigFileError(origin, line, "empty key");
    if (value.empty()) throw ConfigFileError(origin, line, "empty value for '" + key + "'");
    auto& slot = doc.sections[section];
    if (slot.contains(key))
      throw ConfigFileError(origin, line,
                            "duplicate key '" + key + "' (first set on line " + std::to_string(slot[key].line) + ")");
    slot[key] = {value, line};
  }
  return doc;
}

// Accepts integers, decimals ("0.25") and fractions ("2/3") exactly.
inline std::optional<Rational> parse_rational(const std::string& text) {
  const std::string s = detail::trim(text);
  if (s.empty()) return std::nullopt;
  const auto slash = s.find('/');
  auto parse_decimal = [](const std::string& d) -> std::optional<Rational> {
    if (d.empty()) return std::nullopt;
    std::size_t i = 0;
    bool negative = false;
    if (d[0] == '-' || d[0] == '+') {
      negative = d[0] == '-';
      i = 1;
    }
    BigInt num = 0;
    BigInt den = 1;
    bool seen_dot = false;
    bool digits = false;
    for (; i < d.size(); ++i) {
      const char c = d[i];
      if (c == '.' && !seen_dot) {
        seen_dot = true;
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        num = num * 10 + (c - '0');
        if (seen_dot) den *= 10;
        digits = true;
      } else {
        return std::nullopt;
      }
    }
    if (!digits) return std::nullopt;
    Rational r(num, den);
    return negative ? Rational(-r) : r;
  };
  if (slash == std::string::npos) return parse_decimal(s);
  const auto p = parse_decimal(detail::trim(s.substr(0, slash)));
  const auto q = parse_decimal(detail::trim(s.substr(slash + 1)));
  if (!p || !q || *q == 0) return std::nullopt;
  return *p / *q;
}

// ceil(n^c) for rational c, computed exactly: the least k with k^den >= n^num.
inline int ceil_power(int n, const Rational& c) {
  if (c < 0) throw std::invalid_argument("ceil_power: exponent must be nonnegative");
  const BigInt num = numerator(c);
  const BigInt den = denominator(c);
  const auto un = num.convert_to<unsigned>();
  const auto ud = den.convert_to<unsigned>();
  const BigInt target = boost::multiprecision::pow(BigInt(n), un);
  auto guess = static_cast<long long>(std::floor(std::pow(static_cast<double>(n), to_double(c))));
  guess = std::max(1LL, guess - 2);
  while (boost::multiprecision::pow(BigInt(guess), ud) < target) ++guess;
  while (guess > 1 && boost::multiprecision::pow(BigInt(guess - 1), ud) >= target) --guess;
  return static_cast<int>(guess);
}

enum class ScenarioKind { figure1, dominance, coupling, busy, assoc, theorem3, scaling, single_queue };

inline std::optional<ScenarioKind> scenario_from_name(const std::string& name) {
  static const std::map<std::string, ScenarioKind> names{
      {"figure1", ScenarioKind::figure1},   {"dominance", ScenarioKind::dominance},
      {"coupling", ScenarioKind::coupling}, {"busy", ScenarioKind::busy},
      {"assoc", ScenarioKind::assoc},       {"theorem3", ScenarioKind::theorem3},
      {"scaling", ScenarioKind::scaling},   {"single-queue", ScenarioKind::single_queue}};
  const auto it = names.find(name);
  if (it == names.end()) return std::nullopt;
  return it->second;
}

inline std::string scenario_name(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::figure1: return "figure1";
    case ScenarioKind::dominance: return "dominance";
    case ScenarioKind::coupling: return "coupling";
    case ScenarioKind::busy: return "busy";
    case ScenarioKind::assoc: return "assoc";
    case ScenarioKind::theorem3: return "theorem3";
    case ScenarioKind::scaling: return "scaling";
    case ScenarioKind::single_queue: return "single-queue";
  }
  return "";
}

// Sweep and experiment parameters. Unset lists fall back to per-scenario
// defaults at run time.
struct ScenarioParams {
  std::vector<int> n_values;
  std::vector<Rational> k_exponents;
  std::vector<std::pair<int, int>> pairs;  // explicit (n, k) systems
  std::vector<std::string> betas;          // rationals in units of Lambda, or "threshold"
  double tau = 5.0;                        // coupling horizon
  std::optional<std::uint64_t> samples;
  double interval = 2.0;                   // snapshot interval, in mean service times
  std::uint64_t snapshots = 20'000'000;    // per system, split over replications
  std::size_t grid_points = 200;
};

struct Scenario {
  std::optional<ScenarioKind> kind;  // may be supplied by the CLI instead
  int replications = 20;
  std::string output_dir = "out";
  bool emit_plotdata = true;
  ScenarioParams params;
};

struct ParsedConfig {
  SystemConfig system;
  Scenario scenario;
  IniDocument document;
};

namespace detail {

class EntryReader {
 public:
  explicit EntryReader(const IniDocument& doc) : doc_(doc) {}

  [[noreturn]] void fail(const ConfigEntry& e, const std::string& what) const {
    throw ConfigFileError(doc_.origin, e.line, what);
  }

  template <class Int>
  Int integer(const ConfigEntry& e, const std::string& key) const {
    Int v{};
    const auto* first = e.value.data();
    const auto* last = first + e.value.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) fail(e, "'" + key + "' must be an integer, got '" + e.value + "'");
    return v;
  }

  double number(const ConfigEntry& e, const std::string& key) const {
    const auto r = parse_rational(e.value);
    if (!r) fail(e, "'" + key + "' must be a number or fraction, got '" + e.value + "'");
    return to_double(*r);
  }

  Rational rational(const std::string& text, const ConfigEntry& e, const std::string& key) const {
    const auto r = parse_rational(text);
    if (!r) fail(e, "'" + key + "' has a malformed number '" + text + "'");
    return *r;
  }

  std::vector<double> numbers(const ConfigEntry& e, const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_list(e.value)) out.push_back(to_double(rational(item, e, key)));
    if (out.empty()) fail(e, "'" + key + "' must be a nonempty list");
    return out;
  }

  bool boolean(const ConfigEntry& e, const std::string& key) const {
    std::string v = e.value;
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
    if (v == "false" || v == "no" || v == "0" || v == "off") return false;
    fail(e, "'" + key + "' must be true or false, got '" + e.value + "'");
  }

 private:
  const IniDocument& doc_;
};

inline void reject_unknown(const IniDocument& doc, const std::string& section,
                           const std::set<std::string>& allowed) {
  const auto it = doc.sections.find(section);
  if (it == doc.sections.end()) return;
  for (const auto& [key, entry] : it->second) {
    if (!allowed.contains(key)) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ConfigFileError(doc.origin, entry.line,
                            "unknown key '" + key + "' in [" + section + "] (allowed: " + list + ")");
    }
  }
}

inline ServiceDistribution read_service(const IniDocument& doc, const EntryReader& rd) {
  reject_unknown(doc, "service", {"type", "rate", "value", "weights", "rates", "alpha", "xmin", "xmax"});
  const ConfigEntry* type_entry = doc.find("service", "type");
  const std::string type = type_entry ? type_entry->value : "exponential";
  static const std::map<std::string, std::set<std::string>> applicable{
      {"exponential", {"type", "rate"}},
      {"deterministic", {"type", "value"}},
      {"hyperexponential", {"type", "weights", "rates"}},
      {"truncated_pareto", {"type", "alpha", "xmin", "xmax"}}};
  const auto app = applicable.find(type);
  if (app == applicable.end())
    rd.fail(*type_entry, "unknown service type '" + type +
                             "' (expected exponential, deterministic, hyperexponential or truncated_pareto)");
  if (const auto s = doc.sections.find("service"); s != doc.sections.end())
    for (const auto& [key, entry] : s->second)
      if (!app->second.contains(key)) rd.fail(entry, "key '" + key + "' does not apply to " + type + " service");

  auto get = [&](const std::string& key, double fallback) {
    const ConfigEntry* e = doc.find("service", key);
    return e ? rd.number(*e, key) : fallback;
  };
  // Errors from the constructors are pinned to the first relevant line present.
  auto line_of = [&](std::initializer_list<const char*> keys) {
    for (const char* k : keys)
      if (const ConfigEntry* e = doc.find("service", k)) return e->line;
    return type_entry ? type_entry->line : 0;
  };
  try {
    if (type == "exponential") return ServiceDistribution::exponential(get("rate", 1.0));
    if (type == "deterministic") return ServiceDistribution::deterministic(get("value", 1.0));
    if (type == "hyperexponential") {
      const ConfigEntry* w = doc.find("service", "weights");
      const ConfigEntry* r = doc.find("service", "rates");
      return ServiceDistribution::hyperexponential(w ? rd.numbers(*w, "weights") : std::vector<double>{0.9, 0.1},
                                                   r ? rd.numbers(*r, "rates") : std::vector<double>{1.8, 0.2});
    }
    return ServiceDistribution::truncated_pareto(get("alpha", 1.5), get("xmin", 1.0 / 3.0), get("xmax", 100.0));
  } catch (const ConfigFileError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigFileError(doc.origin, line_of({"weights", "rates", "rate", "value", "alpha", "xmin", "xmax"}),
                          e.what());
  }
}

}  // namespace detail

// Builds the system and scenario from a parsed document. Defaults: n = 16,
// k = 4, lambda = 2/3, exponential service with rate 1, seed 1, warmup 0.2,
// 125000 jobs per replication (10^5 after warm-up), 20 replications.
inline ParsedConfig config_from_document(IniDocument doc) {
  const detail::EntryReader rd(doc);
  detail::reject_unknown(doc, "system", {"n", "k", "lambda", "seed", "warmup_fraction", "horizon_jobs"});
  detail::reject_unknown(doc, "scenario",
                         {"name", "replications", "n_values", "k_exponents", "pairs", "betas", "tau", "samples",
                          "interval", "snapshots", "grid_points"});
  detail::reject_unknown(doc, "output", {"directory", "plotdata"});

  auto sys = [&](const char* key) { return doc.find("system", key); };
  const int n = sys("n") ? rd.integer<int>(*sys("n"), "n") : 16;
  const int k = sys("k") ? rd.integer<int>(*sys("k"), "k") : 4;
  const double lambda = sys("lambda") ? rd.number(*sys("lambda"), "lambda") : 2.0 / 3.0;
  const std::uint64_t seed = sys("seed") ? rd.integer<std::uint64_t>(*sys("seed"), "seed") : 1;
  const double warmup = sys("warmup_fraction") ? rd.number(*sys("warmup_fraction"), "warmup_fraction") : 0.2;
  const std::uint64_t horizon =
      sys("horizon_jobs") ? rd.integer<std::uint64_t>(*sys("horizon_jobs"), "horizon_jobs") : 125000;

  ServiceDistribution service = detail::read_service(doc, rd);

  auto system_line = [&](std::initializer_list<const char*> keys) {
    for (const char* key : keys)
      if (const ConfigEntry* e = sys(key)) return e->line;
    return 0;
  };
  std::optional<SystemConfig> system;
  try {
    if (n < 1) throw ConfigError("n must be a positive integer, got " + std::to_string(n));
    if (k < 1 || k > n)
      throw ConfigFileError(doc.origin, system_line({"k", "n"}),
                            "k must satisfy 1 <= k <= n (a job forks into k distinct servers), got k=" +
                                std::to_string(k) + ", n=" + std::to_string(n));
    system.emplace(n, k, lambda, service, seed, warmup, horizon);
  } catch (const ConfigFileError&) {
    throw;
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    int line = system_line({"n"});
    if (what.find("rho") != std::string::npos || what.find("lambda") != std::string::npos)
      line = system_line({"lambda"});
    else if (what.find("warmup") != std::string::npos)
      line = system_line({"warmup_fraction"});
    else if (what.find("horizon") != std::string::npos)
      line = system_line({"horizon_jobs"});
    throw ConfigFileError(doc.origin, line, what);
  }

  Scenario scenario;
  auto sc = [&](const char* key) { return doc.find("scenario", key); };
  if (const auto* e = sc("name")) {
    scenario.kind = scenario_from_name(e->value);
    if (!scenario.kind) rd.fail(*e, "unknown scenario '" + e->value + "'");
  }
  if (const auto* e = sc("replications")) {
    scenario.replications = rd.integer<int>(*e, "replications");
    if (scenario.replications < 1) rd.fail(*e, "'replications' must be >= 1");
  }
  auto& p = scenario.params;
  if (const auto* e = sc("n_values")) {
    for (const auto& item : detail::split_list(e->value)) {
      const Rational r = rd.rational(item, *e, "n_values");
      if (denominator(r) != 1 || r < 1) rd.fail(*e, "'n_values' entries must be positive integers");
      p.n_values.push_back(numerator(r).convert_to<int>());
    }
  }
  if (const auto* e = sc("k_exponents")) {
    for (const auto& item : detail::split_list(e->value)) {
      const Rational r = rd.rational(item, *e, "k_exponents");
      if (r < 0 || r > 1) rd.fail(*e, "'k_exponents' entries must lie in [0, 1]");
      p.k_exponents.push_back(r);
    }
  }
  if (const auto* e = sc("pairs")) {
    for (const auto& item : detail::split_list(e->value)) {
      const auto parts = detail::split_list(item, ':');
      if (parts.size() != 2) rd.fail(*e, "'pairs' entries must look like n:k, got '" + item + "'");
      const ConfigEntry pn{parts[0], e->line};
      const ConfigEntry pk{parts[1], e->line};
      const int pn_v = rd.integer<int>(pn, "pairs");
      const int pk_v = rd.integer<int>(pk, "pairs");
      if (pk_v < 1 || pk_v > pn_v) rd.fail(*e, "pair " + item + " violates 1 <= k <= n");
      p.pairs.emplace_back(pn_v, pk_v);
    }
  }
  if (const auto* e = sc("betas")) {
    for (const auto& item : detail::split_list(e->value)) {
      if (item != "threshold") {
        const Rational r = rd.rational(item, *e, "betas");
        if (r < 0) rd.fail(*e, "'betas' entries must be nonnegative");
      }
      p.betas.push_back(item);
    }
  }
  if (const auto* e = sc("tau")) {
    p.tau = rd.number(*e, "tau");
    if (!(p.tau > 0.0)) rd.fail(*e, "'tau' must be positive");
  }
  if (const auto* e = sc("samples")) {
    p.samples = rd.integer<std::uint64_t>(*e, "samples");
    if (*p.samples < 1) rd.fail(*e, "'samples' must be positive");
  }
  if (const auto* e = sc("interval")) {
    p.interval = rd.number(*e, "interval");
    if (!(p.interval > 0.0)) rd.fail(*e, "'interval' must be positive");
  }
  if (const auto* e = sc("snapshots")) {
    p.snapshots = rd.integer<std::uint64_t>(*e, "snapshots");
    if (p.snapshots < 1000) rd.fail(*e, "'snapshots' must be at least 1000");
  }
  if (const auto* e = sc("grid_points")) {
    p.grid_points = rd.integer<std::size_t>(*e, "grid_points");
    if (p.grid_points < 2) rd.fail(*e, "'grid_points' must be at least 2");
  }
  if (const auto* e = doc.find("output", "directory")) scenario.output_dir = e->value;
  if (const auto* e = doc.find("output", "plotdata")) scenario.emit_plotdata = rd.boolean(*e, "plotdata");

  return {std::move(*system), std::move(scenario), std::move(doc)};
}

inline ParsedConfig parse_config_text(const std::string& text, const std::string& origin = "<config>") {
  std::istringstream in(text);
  return config_from_document(parse_ini(in, origin));
}

inline ParsedConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigFileError(path, 0, "cannot open config file");
  return config_from_document(parse_ini(in, path));
}

}  // namespace forkjoin
