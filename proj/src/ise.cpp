#include "mcens/ise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "mcens/parallel.hpp"
#include "mcens/rng.hpp"
#include "mcens/simulate.hpp"

namespace mcens {

IseWindow::IseWindow(const TrueModel& model, double a, double b, std::size_t grid_n)
  : a_(a)
  , b_(b)
{
  if (!(b > a))
    throw std::invalid_argument("ISE window needs b > a");
  if (grid_n < 3 || grid_n % 2 == 0)
    throw std::invalid_argument("ISE grid needs an odd number (>= 3) of nodes");
  nodes_.resize(grid_n);
  truth_.resize(grid_n);
  weights_.resize(grid_n);
  const double step = (b - a) / static_cast<double>(grid_n - 1);
  for (std::size_t i = 0; i < grid_n; ++i) {
    nodes_[i] = a + step * static_cast<double>(i);
    truth_[i] = model.pdf(nodes_[i]);
    const double w = (i == 0 || i + 1 == grid_n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    weights_[i] = w * step / 3.0;
  }
  nodes_.back() = b;
}

double IseWindow::operator()(const std::function<double(double)>& estimate) const
{
  double sum = 0.0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const double d = estimate(nodes_[i]) - truth_[i];
    sum += weights_[i] * d * d;
  }
  return sum;
}

double IseWindow::operator()(const KdeEstimate& est) const
{
  double sum = 0.0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const double d = est(nodes_[i]) - truth_[i];
    sum += weights_[i] * d * d;
  }
  return sum;
}

double ise(const KdeEstimate& est, const TrueModel& model, double a, double b, std::size_t grid_n)
{
  return IseWindow(model, a, b, grid_n)(est);
}

Summary summarize(std::span<const double> values)
{
  if (values.size() < 2)
    throw std::invalid_argument("summarize needs at least two values");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (const double v : values)
    mean += v;
  mean /= n;
  double ss = 0.0;
  for (const double v : values)
    ss += (v - mean) * (v - mean);
  // Divisor n: {0, 2} has unit spread and half-width 1.96 / sqrt(2).
  const double half = 1.96 * std::sqrt(ss / n) / std::sqrt(n);
  return Summary{ mean, mean - half, mean + half };
}

std::string SampleSize::label() const
{
  return std::to_string(m) + "+" + std::to_string(n);
}

SampleSize SampleSize::parse(const std::string& text)
{
  const auto plus = text.find('+');
  if (plus == std::string::npos || plus == 0 || plus + 1 == text.size())
    throw std::invalid_argument("sample size '" + text + "' is not of the form m+n");
  auto to_count = [&](const std::string& part) {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(part, &used);
    if (used != part.size())
      throw std::invalid_argument("sample size '" + text + "' is not of the form m+n");
    return static_cast<std::size_t>(v);
  };
  return SampleSize{ to_count(text.substr(0, plus)), to_count(text.substr(plus + 1)) };
}

namespace {

double min_ise_over(const DiscreteDist& dist,
                    const Kernel& kernel,
                    std::span<const double> bandwidths,
                    const IseWindow& window)
{
  double best = std::numeric_limits<double>::infinity();
  for (const double h : bandwidths)
    best = std::min(best, window(KdeEstimate(dist, kernel, h)));
  return best;
}

} // namespace

ReplicationIse relative_ise_replication(const MCSample& sample,
                                        const TrueModel& model,
                                        const IseWindow& window,
                                        const ExperimentConfig& config,
                                        const Kernel& kernel)
{
  ReplicationIse out;
  std::optional<Fit> fit;
  try {
    fit.emplace(solve_score(sample, config.solver));
  } catch (const NonConvergence&) {
    out.failed = true;
    return out;
  } catch (const DegenerateTruncation&) {
    out.failed = true;
    return out;
  }
  const DiscreteDist uncensored = DiscreteDist::empirical(sample.x);
  const DiscreteDist& full = fit->dist;

  switch (config.rule) {
    case BandwidthRule::reference: {
      const double h = bandwidth_reference(sample, kernel);
      out.ise_uncensored = window(KdeEstimate(uncensored, kernel, h));
      out.ise_full = window(KdeEstimate(full, kernel, h));
      break;
    }
    case BandwidthRule::theoretical: {
      const double l2 = model.l2_gpp(window.b());
      const double h0 = bandwidth_theoretical(sample.m(), 1.0, kernel, l2);
      const double h1 = bandwidth_theoretical(sample.k(), sample.phat(), kernel, l2);
      out.ise_uncensored = window(KdeEstimate(uncensored, kernel, h0));
      out.ise_full = window(KdeEstimate(full, kernel, h1));
      break;
    }
    case BandwidthRule::oracle: {
      auto grid = BandwidthGrid::around(bandwidth_reference(sample, kernel));
      grid.count = config.oracle_grid_n;
      const auto candidates = grid.values();
      out.ise_uncensored = min_ise_over(uncensored, kernel, candidates, window);
      out.ise_full = min_ise_over(full, kernel, candidates, window);
      break;
    }
  }
  return out;
}

ExperimentResult run_relative_ise(const ExperimentConfig& config, std::size_t size_index)
{
  if (size_index >= config.sizes.size())
    throw std::out_of_range("run_relative_ise: size index out of range");
  if (config.reps < 1)
    throw std::invalid_argument("experiment needs at least one replication");
  const SampleSize size = config.sizes[size_index];
  if (size.m == 0)
    throw std::invalid_argument("experiment needs uncensored observations (m >= 1)");

  const TrueModel model = TrueModel::gamma(config.alpha, 1.0);
  const Kernel kernel = kernel_by_name(config.kernel);
  const IseWindow window(model, 0.0, model.quantile(config.ise_quantile), config.grid_n);

  ExperimentResult result;
  result.size = size;
  result.alpha = config.alpha;
  result.pairs.resize(config.reps);
  // Streams are keyed by the cell size, not its position in the list.
  const std::uint64_t stream = (static_cast<std::uint64_t>(size.m) << 32) ^ size.n;
  parallel_for(config.reps, config.threads, [&](std::size_t rep) {
    const MCSample sample = gen_mc(model, size.m, size.n, derive_seed(config.seed, stream, rep));
    result.pairs[rep] = relative_ise_replication(sample, model, window, config, kernel);
  });

  std::vector<double> rel;
  rel.reserve(config.reps);
  for (const auto& p : result.pairs) {
    if (p.failed) {
      ++result.reps_failed;
      continue;
    }
    rel.push_back(p.ise_uncensored == p.ise_full
                    ? 0.0
                    : 100.0 * (p.ise_uncensored - p.ise_full) / p.ise_full);
  }
  result.reps_used = rel.size();
  if (rel.size() >= 2) {
    const Summary s = summarize(rel);
    result.mean_rel_increase = s.mean;
    result.ci_low = s.ci_low;
    result.ci_high = s.ci_high;
  } else if (rel.size() == 1) {
    result.mean_rel_increase = result.ci_low = result.ci_high = rel.front();
  } else {
    result.mean_rel_increase = result.ci_low = result.ci_high =
      std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

std::vector<ExperimentResult> run_relative_ise(const ExperimentConfig& config)
{
  if (config.sizes.empty())
    throw std::invalid_argument("experiment needs at least one sample size");
  std::vector<ExperimentResult> out;
  for (std::size_t i = 0; i < config.sizes.size(); ++i)
    out.push_back(run_relative_ise(config, i));
  return out;
}

double predicted_ise(double h, std::size_t k, double p, const Kernel& kernel, double l2_gpp)
{
  const double s2 = kernel.sigma2();
  return std::pow(h, 4) * s2 * s2 / 4.0 * l2_gpp +
         kernel.nu2() / (h * static_cast<double>(k) * p);
}

IseExpansion ise_expansion_check(const TrueModel& model,
                                 std::size_t k,
                                 double p,
                                 const Kernel& kernel,
                                 double eta_q,
                                 std::size_t reps,
                                 std::uint64_t seed,
                                 unsigned threads,
                                 const SolverConfig& solver)
{
  if (reps < 1 || k < 2 || !(p > 0.0) || p > 1.0)
    throw std::invalid_argument("ise_expansion_check: need reps >= 1, k >= 2, p in (0, 1]");
  const auto m = static_cast<std::size_t>(std::llround(static_cast<double>(k) * p));
  const std::size_t n = k - m;

  IseExpansion out;
  out.upper = model.quantile(eta_q);
  out.l2_gpp = model.l2_gpp(out.upper);
  out.bandwidth = bandwidth_theoretical(k, p, kernel, out.l2_gpp);
  out.predicted = predicted_ise(out.bandwidth, k, p, kernel, out.l2_gpp);

  const IseWindow window(model, 0.0, out.upper, 2049);
  std::vector<double> values(reps, std::numeric_limits<double>::quiet_NaN());
  parallel_for(reps, threads, [&](std::size_t r) {
    const MCSample sample = gen_mc(model, m, n, derive_seed(seed, 0x15E, r));
    try {
      const Fit fit = solve_score(sample, solver);
      values[r] = window(KdeEstimate(fit.dist, kernel, out.bandwidth));
    } catch (const NonConvergence&) {
    } catch (const DegenerateTruncation&) {
    }
  });
  double total = 0.0;
  std::size_t used = 0;
  for (const double v : values) {
    if (std::isnan(v)) {
      ++out.reps_failed;
      continue;
    }
    total += v;
    ++used;
  }
  out.empirical_mean_ise =
    used > 0 ? total / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

double are_demo(double theta,
                std::size_t m,
                std::size_t n,
                std::size_t reps,
                std::uint64_t seed,
                unsigned threads)
{
  if (!(theta > 0.0))
    throw std::invalid_argument("are_demo: theta must be positive");
  if (m < 1)
    throw std::invalid_argument("are_demo: needs uncensored observations");
  if (reps < 100)
    throw std::invalid_argument("are_demo: needs at least 100 replications");

  // Z ~ Gamma(2, theta) and Y = Z U is exponential with mean theta.
  const TrueModel model = TrueModel::gamma(2.0, theta);
  std::vector<double> unc(reps);
  std::vector<double> full(reps);
  parallel_for(reps, threads, [&](std::size_t r) {
    const MCSample s = gen_mc(model, m, n, derive_seed(seed, 0xA2E, r));
    double sx = 0.0;
    double sy = 0.0;
    for (const double v : s.x)
      sx += v;
    for (const double v : s.y)
      sy += v;
    unc[r] = sx / (2.0 * static_cast<double>(m));
    full[r] = (sx + sy) / (2.0 * static_cast<double>(m) + static_cast<double>(n));
  });

  auto variance = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (const double x : v)
      mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (const double x : v)
      ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(v.size() - 1);
  };
  return variance(unc) / variance(full);
}

} // namespace mcens
