#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "mcens/cli.hpp"
#include "mcens/csv.hpp"
#include "mcens/kde.hpp"
#include "mcens/lengthbias.hpp"
#include "mcens/parallel.hpp"
#include "mcens/rng.hpp"
#include "mcens/simulate.hpp"

namespace mcens {

namespace {

class NumericalFailure : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct Emission
{
  std::string main;
  std::string summary;
};

std::string f17(double v)
{
  return format_double(v);
}

TrueModel model_of(const RunConfig& c)
{
  return TrueModel::gamma(c.alpha, c.scale);
}

// Law of the observed totals and of the unbiased lifetime for each mode.
TrueModel truth_for(const RunConfig& c, const std::string& target)
{
  const TrueModel model = model_of(c);
  if (c.mode == "lb")
    return target == "fu" ? model : model.length_biased();
  if (target == "fu") {
    if (!(c.alpha > 1.0))
      throw std::invalid_argument("--target fu in mc mode needs --alpha > 1");
    return TrueModel::gamma(c.alpha - 1.0, c.scale);
  }
  return model;
}

SampleFile simulate_sample(const RunConfig& c)
{
  const TrueModel model = model_of(c);
  if (c.mode == "lb") {
    const TrueModel censor = c.censor_mean
                               ? TrueModel::gamma(1.0, *c.censor_mean)
                               : TrueModel::point_mass(std::numeric_limits<double>::infinity());
    return gen_lb(model, censor, c.m, c.n, c.seed);
  }
  return gen_mc(model, c.m, c.n, c.seed);
}

SampleFile load_or_simulate(const RunConfig& c)
{
  if (c.input.empty())
    return simulate_sample(c);
  std::ifstream in(c.input);
  if (!in)
    throw CsvError("cannot open input '" + c.input + "'");
  return read_sample_csv(in);
}

Fit fit_or_fail(const MCSample& sample, const SolverConfig& solver)
{
  return solve_score(sample, solver);
}

double window_upper(const RunConfig& c, const TrueModel& truth)
{
  return truth.quantile(c.ise_quantile);
}

double pick_bandwidth(const RunConfig& c,
                      const DiscreteDist& dist,
                      const MCSample& sample,
                      std::size_t k_eff,
                      double p_eff,
                      const Kernel& kernel,
                      const TrueModel& truth)
{
  if (c.bandwidth) {
    if (!(*c.bandwidth > 0.0))
      throw std::invalid_argument("--bandwidth must be positive");
    return *c.bandwidth;
  }
  switch (parse_bandwidth_rule(c.rule)) {
    case BandwidthRule::reference:
      return bandwidth_reference(sample, kernel);
    case BandwidthRule::theoretical:
      return bandwidth_theoretical(k_eff, p_eff, kernel, truth.l2_gpp(window_upper(c, truth)));
    case BandwidthRule::oracle: {
      auto grid = BandwidthGrid::around(bandwidth_reference(sample, kernel));
      grid.count = c.oracle_grid_n;
      return bandwidth_oracle(
        dist, truth, kernel, 0.0, window_upper(c, truth), grid.values(), c.ise_grid_n);
    }
  }
  throw std::logic_error("unhandled bandwidth rule");
}

std::vector<double> linear_grid(double lo, double hi, std::size_t n)
{
  if (n == 0)
    throw std::invalid_argument("--grid-n must be positive");
  if (n > 1 && !(hi > lo))
    throw std::invalid_argument("evaluation grid needs grid-hi > grid-lo");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  if (n > 1)
    g.back() = hi;
  return g;
}

std::string fit_diagnostics(const SolveReport& r)
{
  return fmt::format("# iterations={}\n# residual={}\n# gamma={}\n# r0_index={}\n"
                     "# damping_triggered={}\n# pruned={}\n",
                     r.iterations,
                     f17(r.residual),
                     f17(r.gamma),
                     r.r0_index,
                     r.damping_triggered ? "true" : "false",
                     r.pruned);
}

// ---------------------------------------------------------------------------

Emission cmd_simulate(const RunConfig& c)
{
  std::ostringstream os;
  os << effective_config(c);
  const SampleFile file = simulate_sample(c);
  if (const auto* lb = std::get_if<LbSample>(&file)) {
    os << "# draws=" << lb->draws << '\n';
    write_lb_csv(os, *lb);
  } else {
    write_mc_csv(os, std::get<MCSample>(file));
  }
  return { os.str(), {} };
}

Emission cmd_fit(const RunConfig& c)
{
  const MCSample sample = as_mc(load_or_simulate(c));
  const Fit fit = fit_or_fail(sample, c.solver);
  std::ostringstream os;
  os << effective_config(c) << fit_diagnostics(fit.report);
  write_fit_csv(os, fit.dist);
  return { os.str(), {} };
}

Emission cmd_kde(const RunConfig& c)
{
  const MCSample sample = as_mc(load_or_simulate(c));
  const Fit fit = fit_or_fail(sample, c.solver);
  const Kernel kernel = kernel_by_name(c.kernel);
  const DiscreteDist dist = c.target == "fu" ? unbiased_cdf(fit.dist).fu : fit.dist;
  const TrueModel truth = truth_for(c, c.target);
  const double h = pick_bandwidth(c, dist, sample, sample.k(), sample.phat(), kernel, truth);
  const KdeEstimate est(dist, kernel, h);
  const double hi = c.grid_hi ? *c.grid_hi : dist.atoms().back() + h;

  std::ostringstream os;
  os << effective_config(c) << fit_diagnostics(fit.report) << "# bandwidth_used=" << f17(h) << '\n';
  os << "t,ghat\n";
  for (const double t : linear_grid(c.grid_lo, hi, c.grid_n))
    os << f17(t) << ',' << f17(est(t)) << '\n';
  return { os.str(), {} };
}

Emission cmd_experiment(const RunConfig& c)
{
  ExperimentConfig ec;
  ec.alpha = c.alpha;
  ec.sizes = c.effective_sizes();
  ec.reps = c.effective_reps();
  ec.rule = parse_bandwidth_rule(c.rule);
  ec.seed = c.seed;
  ec.ise_quantile = c.ise_quantile;
  ec.grid_n = c.ise_grid_n;
  ec.oracle_grid_n = c.oracle_grid_n;
  ec.solver = c.solver;
  ec.kernel = c.kernel;
  ec.threads = c.threads;

  std::ostringstream os;
  os << effective_config(c);
  os << "size_label,alpha,mean_pct,ci_low,ci_high,reps_used,reps_failed\n";
  for (std::size_t i = 0; i < ec.sizes.size(); ++i) {
    const ExperimentResult r = run_relative_ise(ec, i);
    if (r.reps_used == 0)
      throw NumericalFailure("every replication failed for " + r.size.label());
    os << r.size.label() << ',' << f17(r.alpha) << ',' << f17(r.mean_rel_increase) << ','
       << f17(r.ci_low) << ',' << f17(r.ci_high) << ',' << r.reps_used << ',' << r.reps_failed
       << '\n';
  }
  return { os.str(), {} };
}

// Quantile points 0.1, 0.3, ..., 0.9 of the fitted law.
std::vector<double> default_cov_grid(const DiscreteDist& dist)
{
  std::vector<double> grid;
  const auto atoms = dist.atoms();
  for (const double q : { 0.1, 0.3, 0.5, 0.7, 0.9 }) {
    std::size_t i = 0;
    while (i + 1 < atoms.size() && dist.cdf(atoms[i]) < q)
      ++i;
    if (grid.empty() || atoms[i] > grid.back())
      grid.push_back(atoms[i]);
  }
  return grid;
}

Emission cmd_covariance(const RunConfig& c)
{
  const SampleFile file = load_or_simulate(c);
  const MCSample sample = as_mc(file);
  const Fit fit = fit_or_fail(sample, c.solver);
  const std::vector<double> grid = c.cov_grid ? *c.cov_grid : default_cov_grid(fit.dist);

  // psi_U is needed on `grid`, or on a finer grid containing it for the z target.
  std::vector<double> psi_grid = grid;
  if (c.cov_target == "z") {
    const auto atoms = fit.dist.atoms();
    const auto masses = fit.dist.masses();
    double lo = 0.0;
    double hi = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i)
      if (masses[i] > 0.0) {
        if (lo == 0.0)
          lo = atoms[i];
        hi = atoms[i];
      }
    if (c.psi_grid_n >= 2 && hi > lo)
      for (const double v : linear_grid(lo, hi, c.psi_grid_n))
        psi_grid.push_back(v);
    std::sort(psi_grid.begin(), psi_grid.end());
    psi_grid.erase(std::unique(psi_grid.begin(), psi_grid.end()), psi_grid.end());
  }

  std::ostringstream header;
  header << effective_config(c);
  CovGrid psi_u;
  if (c.method == "bootstrap") {
    BootstrapOptions opts;
    opts.solver = c.solver;
    opts.threads = c.threads;
    const std::uint64_t seed = derive_seed(c.seed, 0xB007, 0);
    BootstrapResult br = std::visit(
      [&](const auto& s) { return psi_u_bootstrap(s, c.bootstrap_reps, psi_grid, seed, opts); },
      file);
    header << "# bootstrap_failures=" << br.failures << '\n';
    psi_u = std::move(br.cov);
  } else {
    ExplicitCovOptions opts;
    opts.include_uncensored_term = c.uncensored_term;
    opts.kernel = c.kernel;
    psi_u = psi_u_explicit(sample, fit.dist, psi_grid, opts);
  }
  for (const auto& w : psi_u.warnings)
    header << "# warning: " << w << '\n';

  const CovGrid result = c.cov_target == "z" ? psi_z_hat(psi_u, unbiased_cdf(fit.dist), grid) : psi_u;
  std::ostringstream os;
  os << header.str() << "s,t,value\n";
  for (std::size_t i = 0; i < result.size(); ++i)
    for (std::size_t j = 0; j < result.size(); ++j)
      os << f17(result.grid()[i]) << ',' << f17(result.grid()[j]) << ',' << f17(result(i, j))
         << '\n';
  return { os.str(), {} };
}

Emission cmd_are_demo(const RunConfig& c)
{
  const std::size_t reps = c.effective_reps();
  const double ratio = are_demo(c.theta, c.m, c.n, reps, c.seed, c.threads);
  std::ostringstream os;
  os << effective_config(c) << "theta,m,n,reps,variance_ratio,predicted\n";
  os << f17(c.theta) << ',' << c.m << ',' << c.n << ',' << reps << ',' << f17(ratio) << ','
     << f17(1.0 + static_cast<double>(c.n) / (2.0 * static_cast<double>(c.m))) << '\n';
  return { os.str(), {} };
}

Emission cmd_figure_paths(const RunConfig& c)
{
  if (c.paths < 1)
    throw std::invalid_argument("--paths must be at least 1");
  const TrueModel model = model_of(c);
  const Kernel kernel = kernel_by_name(c.kernel);
  const std::vector<SampleSize> sizes = c.effective_sizes();
  const double hi = c.grid_hi ? *c.grid_hi : window_upper(c, model);
  const std::vector<double> grid = linear_grid(c.grid_lo, hi, c.grid_n);
  const std::size_t q = grid.size();

  struct PathPair
  {
    std::vector<double> uncensored;
    std::vector<double> full;
    bool failed = false;
  };

  std::ostringstream os;
  std::ostringstream summary;
  os << effective_config(c) << "panel,replication,t,ghat\n";
  summary << effective_config(c) << "panel,t,mean_ghat,true_g\n";

  for (const SampleSize& size : sizes) {
    if (size.m == 0)
      throw std::invalid_argument("figure-paths needs m >= 1 in every size");
    std::vector<PathPair> paths(c.paths);
    const std::uint64_t stream = (static_cast<std::uint64_t>(size.m) << 32) ^ size.n;
    parallel_for(c.paths, c.threads, [&](std::size_t r) {
      const MCSample sample = gen_mc(model, size.m, size.n, derive_seed(c.seed, stream, r));
      PathPair& out = paths[r];
      std::optional<Fit> fit;
      try {
        fit.emplace(solve_score(sample, c.solver));
      } catch (const NonConvergence&) {
        out.failed = true;
        return;
      } catch (const DegenerateTruncation&) {
        out.failed = true;
        return;
      }
      const DiscreteDist unc = DiscreteDist::empirical(sample.x);
      const double h0 = pick_bandwidth(c, unc, sample, sample.m(), 1.0, kernel, model);
      const double h1 = pick_bandwidth(c, fit->dist, sample, sample.k(), sample.phat(), kernel, model);
      const KdeEstimate e0(unc, kernel, h0);
      const KdeEstimate e1(fit->dist, kernel, h1);
      out.uncensored.resize(q);
      out.full.resize(q);
      for (std::size_t i = 0; i < q; ++i) {
        out.uncensored[i] = e0(grid[i]);
        out.full[i] = e1(grid[i]);
      }
    });

    std::size_t used = 0;
    for (const auto& p : paths)
      used += p.failed ? 0 : 1;
    if (used == 0)
      throw NumericalFailure("every sample path failed for " + size.label());

    for (const bool full : { false, true }) {
      const std::string panel = (full ? "full-" : "uncensored-") + size.label();
      std::vector<double> mean(q, 0.0);
      for (std::size_t r = 0; r < paths.size(); ++r) {
        if (paths[r].failed)
          continue;
        const auto& values = full ? paths[r].full : paths[r].uncensored;
        for (std::size_t i = 0; i < q; ++i) {
          os << panel << ',' << r << ',' << f17(grid[i]) << ',' << f17(values[i]) << '\n';
          mean[i] += values[i];
        }
      }
      for (std::size_t i = 0; i < q; ++i)
        summary << panel << ',' << f17(grid[i]) << ',' << f17(mean[i] / static_cast<double>(used))
                << ',' << f17(model.pdf(grid[i])) << '\n';
    }
    if (used < paths.size())
      summary << "# " << size.label() << " failed_paths=" << paths.size() - used << '\n';
  }
  return { os.str(), summary.str() };
}

Emission dispatch(const RunConfig& c)
{
  if (c.subcommand == "simulate")
    return cmd_simulate(c);
  if (c.subcommand == "fit")
    return cmd_fit(c);
  if (c.subcommand == "kde")
    return cmd_kde(c);
  if (c.subcommand == "experiment")
    return cmd_experiment(c);
  if (c.subcommand == "covariance")
    return cmd_covariance(c);
  if (c.subcommand == "are-demo")
    return cmd_are_demo(c);
  return cmd_figure_paths(c);
}

void write_text(const std::string& path, const std::string& text)
{
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f)
    throw CsvError("cannot open '" + path + "' for writing");
  f << text;
  f.flush();
  if (!f)
    throw CsvError("failed writing '" + path + "'");
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
  if (std::find(args.begin(), args.end(), "--help") != args.end() ||
      std::find(args.begin(), args.end(), "-h") != args.end()) {
    out << usage_text();
    return 0;
  }
  try {
    const RunConfig cfg = parse_config(args);
    const Emission e = dispatch(cfg);
    if (cfg.output.empty())
      out << e.main;
    else
      write_text(cfg.output, e.main);
    if (!e.summary.empty()) {
      if (!cfg.summary_output.empty())
        write_text(cfg.summary_output, e.summary);
      else if (!cfg.output.empty())
        write_text(cfg.output + ".summary.csv", e.summary);
      else
        out << e.summary;
    }
    return 0;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << usage_text();
    return 1;
  } catch (const CsvError& e) {
    err << "I/O error: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 2;
  }
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err)
{
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i)
    args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

} // namespace mcens
