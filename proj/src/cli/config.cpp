#include <algorithm>
#include <cctype>
#include <cmath>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "mcens/cli.hpp"
#include "mcens/csv.hpp"
#include "mcens/kde.hpp"

namespace mcens {

namespace {

std::string trim(std::string s)
{
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& text, const std::string& why)
{
  throw UsageError(fmt::format("--{}: invalid value '{}' ({})", key, text, why));
}

double to_double(const std::string& key, const std::string& text)
{
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v))
    bad_value(key, text, "expected a finite number");
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& text)
{
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    bad_value(key, text, "expected a non-negative integer");
  return v;
}

std::optional<double> to_optional_double(const std::string& key, const std::string& text)
{
  if (text == "none" || text == "auto")
    return std::nullopt;
  return to_double(key, text);
}

std::string choice(const std::string& key,
                   const std::string& text,
                   std::initializer_list<const char*> allowed)
{
  for (const char* a : allowed)
    if (text == a)
      return text;
  std::string list;
  for (const char* a : allowed)
    list += (list.empty() ? "" : "|") + std::string(a);
  bad_value(key, text, "expected " + list);
}

bool to_bool(const std::string& key, const std::string& text)
{
  if (text == "1" || text == "true" || text == "yes")
    return true;
  if (text == "0" || text == "false" || text == "no")
    return false;
  bad_value(key, text, "expected true|false");
}

std::vector<std::string> split_list(const std::string& text)
{
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ','))
    parts.push_back(trim(part));
  return parts;
}

std::string opt_text(const std::optional<double>& v, const char* unset)
{
  return v ? format_double(*v) : unset;
}

struct OptionDef
{
  std::string key;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  // Excluded from the echoed header: settings that cannot change results.
  bool echoed = true;
};

const std::vector<OptionDef>& registry()
{
  using C = RunConfig;
  using S = const std::string&;
  static const std::vector<OptionDef> options{
    { "seed", "master seed",
      [](C& c, S v) { c.seed = to_u64("seed", v); },
      [](const C& c) { return std::to_string(c.seed); } },
    { "threads", "worker threads (0 = hardware concurrency)",
      [](C& c, S v) { c.threads = static_cast<unsigned>(to_u64("threads", v)); },
      [](const C& c) { return std::to_string(c.threads); }, false },
    { "input", "sample CSV (value,censored or onset_age,followup,delta)",
      [](C& c, S v) { c.input = v; },
      [](const C& c) { return c.input; } },
    { "output", "output file (default stdout)",
      [](C& c, S v) { c.output = v; },
      [](const C& c) { return c.output; }, false },
    { "summary-output", "figure-paths summary file",
      [](C& c, S v) { c.summary_output = v; },
      [](const C& c) { return c.summary_output; }, false },
    { "alpha", "Gamma shape of the true law",
      [](C& c, S v) { c.alpha = to_double("alpha", v); },
      [](const C& c) { return format_double(c.alpha); } },
    { "scale", "Gamma scale of the true law",
      [](C& c, S v) { c.scale = to_double("scale", v); },
      [](const C& c) { return format_double(c.scale); } },
    { "m", "uncensored count",
      [](C& c, S v) { c.m = to_u64("m", v); },
      [](const C& c) { return std::to_string(c.m); } },
    { "n", "censored count",
      [](C& c, S v) { c.n = to_u64("n", v); },
      [](const C& c) { return std::to_string(c.n); } },
    { "mode", "mc (multiplicative censoring) or lb (length-biased cohort)",
      [](C& c, S v) { c.mode = choice("mode", v, { "mc", "lb" }); },
      [](const C& c) { return c.mode; } },
    { "censor-mean", "mean residual censoring time in lb mode, or none",
      [](C& c, S v) {
        c.censor_mean = to_optional_double("censor-mean", v);
        if (c.censor_mean && !(*c.censor_mean > 0.0))
          bad_value("censor-mean", v, "must be positive");
      },
      [](const C& c) { return opt_text(c.censor_mean, "none"); } },
    { "alpha-trunc", "truncation exponent: gamma = k^(-1/(2 alpha))",
      [](C& c, S v) { c.solver.alpha_trunc = to_double("alpha-trunc", v); },
      [](const C& c) { return format_double(c.solver.alpha_trunc); } },
    { "gamma-override", "fixed truncation point, or none",
      [](C& c, S v) { c.solver.gamma_override = to_optional_double("gamma-override", v); },
      [](const C& c) { return opt_text(c.solver.gamma_override, "none"); } },
    { "tol", "solver tolerance",
      [](C& c, S v) { c.solver.tol = to_double("tol", v); },
      [](const C& c) { return format_double(c.solver.tol); } },
    { "max-iter", "solver iteration cap",
      [](C& c, S v) { c.solver.max_iter = to_u64("max-iter", v); },
      [](const C& c) { return std::to_string(c.solver.max_iter); } },
    { "damping", "initial damping factor in (0, 1]",
      [](C& c, S v) { c.solver.damping = to_double("damping", v); },
      [](const C& c) { return format_double(c.solver.damping); } },
    { "kernel", "epanechnikov or biweight",
      [](C& c, S v) { c.kernel = choice("kernel", v, { "epanechnikov", "biweight" }); },
      [](const C& c) { return c.kernel; } },
    { "rule", "bandwidth rule: reference, theoretical or oracle",
      [](C& c, S v) {
        try {
          c.rule = to_string(parse_bandwidth_rule(v));
        } catch (const std::invalid_argument&) {
          bad_value("rule", v, "expected reference|theoretical|oracle");
        }
      },
      [](const C& c) { return c.rule; } },
    { "bandwidth", "fixed bandwidth, or auto to use the rule",
      [](C& c, S v) { c.bandwidth = to_optional_double("bandwidth", v); },
      [](const C& c) { return opt_text(c.bandwidth, "auto"); } },
    { "grid-lo", "evaluation grid start",
      [](C& c, S v) { c.grid_lo = to_double("grid-lo", v); },
      [](const C& c) { return format_double(c.grid_lo); } },
    { "grid-hi", "evaluation grid end, or auto",
      [](C& c, S v) { c.grid_hi = to_optional_double("grid-hi", v); },
      [](const C& c) { return opt_text(c.grid_hi, "auto"); } },
    { "grid-n", "evaluation grid points",
      [](C& c, S v) { c.grid_n = to_u64("grid-n", v); },
      [](const C& c) { return std::to_string(c.grid_n); } },
    { "target", "kde target: g (total-time density) or fu (unbiased density)",
      [](C& c, S v) { c.target = choice("target", v, { "g", "fu" }); },
      [](const C& c) { return c.target; } },
    { "sizes", "comma-separated m+n cells",
      [](C& c, S v) {
        std::vector<SampleSize> sizes;
        for (const auto& part : split_list(v)) {
          try {
            sizes.push_back(SampleSize::parse(part));
          } catch (const std::exception&) {
            bad_value("sizes", v, "expected m+n[,m+n...]");
          }
        }
        if (sizes.empty())
          bad_value("sizes", v, "empty list");
        c.sizes = std::move(sizes);
      },
      [](const C& c) {
        std::string s;
        for (const auto& z : c.effective_sizes())
          s += (s.empty() ? "" : ",") + z.label();
        return s;
      } },
    { "reps", "replications (experiment default 500, are-demo 2000)",
      [](C& c, S v) { c.reps = to_u64("reps", v); },
      [](const C& c) { return std::to_string(c.effective_reps()); } },
    { "ise-quantile", "ISE window upper quantile of the truth",
      [](C& c, S v) { c.ise_quantile = to_double("ise-quantile", v); },
      [](const C& c) { return format_double(c.ise_quantile); } },
    { "ise-grid-n", "Simpson nodes for ISE",
      [](C& c, S v) { c.ise_grid_n = to_u64("ise-grid-n", v); },
      [](const C& c) { return std::to_string(c.ise_grid_n); } },
    { "oracle-grid-n", "candidate bandwidths for the oracle rule",
      [](C& c, S v) { c.oracle_grid_n = to_u64("oracle-grid-n", v); },
      [](const C& c) { return std::to_string(c.oracle_grid_n); } },
    { "method", "covariance method: bootstrap or explicit",
      [](C& c, S v) { c.method = choice("method", v, { "bootstrap", "explicit" }); },
      [](const C& c) { return c.method; } },
    { "bootstrap-reps", "bootstrap resamples",
      [](C& c, S v) { c.bootstrap_reps = to_u64("bootstrap-reps", v); },
      [](const C& c) { return std::to_string(c.bootstrap_reps); } },
    { "cov-grid", "comma-separated covariance grid, or auto",
      [](C& c, S v) {
        if (v == "auto") {
          c.cov_grid.reset();
          return;
        }
        std::vector<double> g;
        for (const auto& part : split_list(v))
          g.push_back(to_double("cov-grid", part));
        c.cov_grid = std::move(g);
      },
      [](const C& c) {
        if (!c.cov_grid)
          return std::string("auto");
        std::string s;
        for (const double v : *c.cov_grid)
          s += (s.empty() ? "" : ",") + format_double(v);
        return s;
      } },
    { "cov-target", "u (sqrt(k)(G_hat - G)) or z (unbiased law)",
      [](C& c, S v) { c.cov_target = choice("cov-target", v, { "u", "z" }); },
      [](const C& c) { return c.cov_target; } },
    { "psi-grid-n", "inner grid size for the z target",
      [](C& c, S v) { c.psi_grid_n = to_u64("psi-grid-n", v); },
      [](const C& c) { return std::to_string(c.psi_grid_n); } },
    { "uncensored-term", "include the uncensored term in the closed form",
      [](C& c, S v) { c.uncensored_term = to_bool("uncensored-term", v); },
      [](const C& c) { return std::string(c.uncensored_term ? "true" : "false"); } },
    { "theta", "exponential mean for are-demo",
      [](C& c, S v) { c.theta = to_double("theta", v); },
      [](const C& c) { return format_double(c.theta); } },
    { "paths", "sample paths per panel",
      [](C& c, S v) { c.paths = to_u64("paths", v); },
      [](const C& c) { return std::to_string(c.paths); } },
  };
  return options;
}

const OptionDef* find_option(const std::string& key)
{
  for (const auto& s : registry())
    if (s.key == key)
      return &s;
  return nullptr;
}

std::map<std::string, std::string> read_config_file(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw CsvError("cannot open config file '" + path + "'");
  std::map<std::string, std::string> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#')
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(fmt::format("{}:{}: expected key=value", path, line_no));
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    if (key == "config" || !find_option(key))
      throw UsageError(fmt::format("{}:{}: unknown key '{}'", path, line_no, key));
    values[key] = trim(line.substr(eq + 1));
  }
  return values;
}

} // namespace

std::vector<SampleSize> RunConfig::effective_sizes() const
{
  if (sizes)
    return *sizes;
  if (subcommand == "figure-paths")
    return { { 50, 50 }, { 100, 100 }, { 200, 200 } };
  return { { m, n } };
}

std::size_t RunConfig::effective_reps() const
{
  if (reps)
    return *reps;
  return subcommand == "are-demo" ? 2000 : 500;
}

std::string usage_text()
{
  std::string text = "usage: mcens <subcommand> [--key value ...] [--config file]\n\nsubcommands:";
  for (const auto& s : subcommands())
    text += " " + s;
  text += "\n\noptions:\n";
  text += "  --config <file>  flat key=value file; flags take precedence\n";
  for (const auto& s : registry())
    text += fmt::format("  --{:<16} {}\n", s.key, s.help);
  return text;
}

RunConfig parse_config(const std::vector<std::string>& args)
{
  if (args.empty())
    throw UsageError("missing subcommand");
  RunConfig cfg;
  cfg.subcommand = args.front();
  if (std::find(subcommands().begin(), subcommands().end(), cfg.subcommand) == subcommands().end())
    throw UsageError("unknown subcommand '" + cfg.subcommand + "'");

  CLI::App app{ "mcens" };
  app.set_help_flag();
  std::map<std::string, std::string> flags;
  std::string config_file;
  app.add_option("--config", config_file)->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  for (const auto& s : registry())
    app.add_option("--" + s.key, flags[s.key], s.help)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::vector<std::string> rest(args.begin() + 1, args.end());
  for (const auto& a : rest) {
    if (a.rfind("--", 0) != 0)
      continue;
    const std::string name = a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2);
    if (name != "config" && find_option(name) == nullptr)
      throw UsageError("unknown flag '--" + name + "'");
  }
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  if (!config_file.empty()) {
    cfg.config_file = config_file;
    for (const auto& [key, value] : read_config_file(config_file))
      find_option(key)->set(cfg, value);
  }
  for (const auto& s : registry())
    if (app.count("--" + s.key) > 0)
      s.set(cfg, flags[s.key]);
  return cfg;
}

std::string effective_config(const RunConfig& cfg)
{
  std::string text = "# subcommand=" + cfg.subcommand + "\n";
  for (const auto& s : registry())
    if (s.echoed)
      text += "# " + s.key + "=" + s.get(cfg) + "\n";
  return text;
}

} // namespace mcens
