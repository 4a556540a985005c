#include "mcens/npmle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace mcens {

namespace {

// A censored-only atom is a pruning candidate once its mass is below this
// fraction of 1/k and still shrinking under phi.
constexpr double kPruneLevel = 1e-3;
// Relative slack in the gradient test that keeps a pruned atom at zero.
constexpr double kKktSlack = 1e-9;
constexpr int kPruneRounds = 8;
// Consecutive increases of the iterate change that trigger damping.
constexpr int kOscillationRun = 10;

struct PhiParts
{
  std::vector<double> phi;
  //! (1/t_i) sum_{j <= i} c_j / f(t_j): d loglik / d a_i without the u_i/a_i term.
  std::vector<double> gradient;
};

PhiParts phi_parts(const PooledAtoms& pooled, std::size_t r0, std::span<const double> active)
{
  const std::size_t q = pooled.atoms.size();
  const std::size_t s = q - r0;
  const double k = static_cast<double>(pooled.k());

  // suffix[i] = sum_{l >= r0 + i} a_l / t_l
  std::vector<double> suffix(s + 1, 0.0);
  for (std::size_t i = s; i-- > 0;)
    suffix[i] = suffix[i + 1] + active[i] / pooled.atoms[r0 + i];

  PhiParts out{ std::vector<double>(s), std::vector<double>(s) };
  double inner = 0.0;
  // Censored atoms below the truncation point all see the full suffix.
  for (std::size_t j = 0; j < r0; ++j)
    inner += static_cast<double>(pooled.counts[j].censored) / suffix[0];
  for (std::size_t i = 0; i < s; ++i) {
    const auto& c = pooled.counts[r0 + i];
    if (c.censored > 0)
      inner += static_cast<double>(c.censored) / suffix[i];
    const double t = pooled.atoms[r0 + i];
    out.gradient[i] = inner / t;
    out.phi[i] = (static_cast<double>(c.uncensored) + active[i] * out.gradient[i]) / k;
  }
  return out;
}

// Projects back onto the simplex: clip negatives, rescale to unit mass.
void renormalize(std::vector<double>& a)
{
  for (double& v : a)
    v = std::max(v, 0.0);
  const double total = stable_sum(a);
  for (double& v : a)
    v /= total;
}

struct IterationState
{
  std::vector<double> masses;
  std::size_t iterations = 0;
  double delta = std::numeric_limits<double>::infinity();
  double damping = 1.0;
  bool damping_triggered = false;
};

// Concave log-likelihood whose EM map is phi.
double loglik(const PooledAtoms& pooled, std::size_t r0, std::span<const double> active)
{
  const std::size_t s = active.size();
  double suffix = 0.0;
  double total = 0.0;
  for (std::size_t i = s; i-- > 0;) {
    const auto& c = pooled.counts[r0 + i];
    suffix += active[i] / pooled.atoms[r0 + i];
    if (c.uncensored > 0)
      total += static_cast<double>(c.uncensored) * std::log(active[i]);
    if (c.censored > 0)
      total += static_cast<double>(c.censored) * std::log(suffix);
  }
  for (std::size_t j = 0; j < r0; ++j)
    total += static_cast<double>(pooled.counts[j].censored) * std::log(suffix);
  return total;
}

// One damped step a -> (1 - d) a + d phi(a), renormalized.
void damped_step(const PooledAtoms& pooled,
                 std::size_t r0,
                 double d,
                 std::span<const double> a,
                 std::vector<double>& out)
{
  auto parts = phi_parts(pooled, r0, a);
  renormalize(parts.phi);
  out.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = (1.0 - d) * a[i] + d * parts.phi[i];
  renormalize(out);
}

// Iterates the damped map until its sup-norm change drops to tol or the
// budget runs out. Each cycle takes two plain steps and, when it raises the
// likelihood, a squared extrapolation along them followed by one more step;
// the limit is the same fixed point, reached in far fewer steps when the
// plain map converges slowly (heavy censoring).
bool iterate(const PooledAtoms& pooled,
             std::size_t r0,
             const SolverConfig& cfg,
             IterationState& state)
{
  const double k = static_cast<double>(pooled.k());
  int rising = 0;
  double previous = std::numeric_limits<double>::infinity();
  std::vector<double> f1;
  std::vector<double> f2;
  std::vector<double> cand;
  std::vector<double> next;
  const std::size_t s = state.masses.size();
  while (state.iterations < cfg.max_iter) {
    const auto& a = state.masses;
    damped_step(pooled, r0, state.damping, a, f1);
    ++state.iterations;
    double delta = 0.0;
    for (std::size_t i = 0; i < s; ++i)
      delta = std::max(delta, std::abs(f1[i] - a[i]));
    state.delta = delta;
    if (delta <= cfg.tol) {
      state.masses.swap(f1);
      return true;
    }
    rising = delta > previous ? rising + 1 : 0;
    previous = delta;
    if (rising >= kOscillationRun && state.damping > 0.5) {
      state.damping = 0.5;
      state.damping_triggered = true;
      rising = 0;
    }
    if (state.iterations >= cfg.max_iter) {
      state.masses.swap(f1);
      return false;
    }

    damped_step(pooled, r0, state.damping, f1, f2);
    ++state.iterations;
    double rr = 0.0;
    double vv = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
      const double r = f1[i] - a[i];
      const double v = f2[i] - 2.0 * f1[i] + a[i];
      rr += r * r;
      vv += v * v;
    }
    if (!(vv > 0.0) || state.iterations >= cfg.max_iter) {
      state.masses.swap(f2);
      continue;
    }

    double step = std::min(-1.0, -std::sqrt(rr / vv));
    bool usable = false;
    while (step < -1.0) {
      cand.resize(s);
      bool ok = true;
      for (std::size_t i = 0; i < s && ok; ++i) {
        const double r = f1[i] - a[i];
        const double v = f2[i] - 2.0 * f1[i] + a[i];
        double c = a[i] - 2.0 * step * r + step * step * v;
        if (!(c > 0.0)) {
          // A vanishing censored-only mass may land on the boundary; the
          // gradient check after convergence restores it if that was wrong.
          if (pooled.counts[r0 + i].uncensored == 0 && a[i] < kPruneLevel / k && std::isfinite(c))
            c = 0.0;
          else
            ok = false;
        }
        cand[i] = c;
      }
      if (ok) {
        usable = true;
        break;
      }
      step = 0.5 * (step - 1.0);
      if (step > -1.01)
        break;
    }
    if (!usable) {
      state.masses.swap(f2);
      continue;
    }
    renormalize(cand);
    damped_step(pooled, r0, state.damping, cand, next);
    ++state.iterations;
    if (loglik(pooled, r0, next) >= loglik(pooled, r0, f2))
      state.masses.swap(next);
    else
      state.masses.swap(f2);
  }
  return false;
}

double residual_of(const PooledAtoms& pooled, std::size_t r0, std::span<const double> active)
{
  const auto parts = phi_parts(pooled, r0, active);
  double worst = 0.0;
  for (std::size_t i = 0; i < active.size(); ++i)
    worst = std::max(worst, std::abs(active[i] - parts.phi[i]));
  return worst;
}

} // namespace

void validate(const SolverConfig& cfg)
{
  if (!(cfg.tol > 0.0))
    throw std::invalid_argument("solver tol must be positive");
  if (cfg.max_iter < 1)
    throw std::invalid_argument("solver max_iter must be at least 1");
  if (!(cfg.damping > 0.0) || cfg.damping > 1.0)
    throw std::invalid_argument("solver damping must lie in (0, 1]");
  if (!(cfg.alpha_trunc > 0.0))
    throw std::invalid_argument("alpha_trunc must be positive");
  if (cfg.gamma_override && !(*cfg.gamma_override > 0.0))
    throw std::invalid_argument("gamma override must be positive");
}

NonConvergence::NonConvergence(Fit partial)
  : std::runtime_error("score equation iteration did not converge in " +
                       std::to_string(partial.report.iterations) + " iterations (delta " +
                       std::to_string(partial.report.final_delta) + ")")
  , partial_(std::move(partial))
{
}

PooledAtoms pool(const MCSample& sample)
{
  std::vector<std::pair<double, bool>> values;
  values.reserve(sample.k());
  for (const double v : sample.x)
    values.emplace_back(v, true);
  for (const double v : sample.y)
    values.emplace_back(v, false);
  std::sort(values.begin(), values.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  PooledAtoms out;
  out.m = sample.m();
  out.n = sample.n();
  for (const auto& [value, uncensored] : values) {
    if (out.atoms.empty() || out.atoms.back() != value) {
      out.atoms.push_back(value);
      out.counts.emplace_back();
    }
    auto& c = out.counts.back();
    (uncensored ? c.uncensored : c.censored) += 1;
  }
  return out;
}

double truncation_point(std::size_t k, const SolverConfig& cfg)
{
  if (cfg.gamma_override)
    return *cfg.gamma_override;
  return std::pow(static_cast<double>(k), -1.0 / (2.0 * cfg.alpha_trunc));
}

std::vector<double> apply_phi(const PooledAtoms& pooled,
                              std::size_t r0,
                              std::span<const double> active)
{
  if (r0 >= pooled.atoms.size() || active.size() != pooled.atoms.size() - r0)
    throw std::invalid_argument("apply_phi: mass vector does not match the atoms above r0");
  return phi_parts(pooled, r0, active).phi;
}

Fit solve_score(const MCSample& sample, const SolverConfig& cfg)
{
  validate(sample);
  validate(cfg);
  const PooledAtoms pooled = pool(sample);
  const std::size_t q = pooled.atoms.size();
  const double k = static_cast<double>(pooled.k());

  double gamma = truncation_point(pooled.k(), cfg);
  if (pooled.m > 0) {
    const double smallest_x = *std::min_element(sample.x.begin(), sample.x.end());
    if (smallest_x < gamma) {
      if (cfg.gamma_override)
        throw std::invalid_argument("uncensored value below the declared truncation point");
      gamma = smallest_x;
    }
  }
  const auto r0 = static_cast<std::size_t>(
    std::lower_bound(pooled.atoms.begin(), pooled.atoms.end(), gamma) - pooled.atoms.begin());
  if (r0 == q)
    throw DegenerateTruncation("truncation point " + std::to_string(gamma) +
                               " exceeds every observation");

  SolveReport report;
  report.r0_index = r0;
  report.gamma = gamma;

  auto assemble = [&](const std::vector<double>& active) {
    std::vector<double> masses(q, 0.0);
    std::copy(active.begin(), active.end(), masses.begin() + static_cast<std::ptrdiff_t>(r0));
    return DiscreteDist(pooled.atoms, std::move(masses), pooled.counts);
  };

  // Without censored data the score equation is solved by the empirical law.
  if (pooled.n == 0) {
    std::vector<double> active(q - r0);
    for (std::size_t i = 0; i < active.size(); ++i)
      active[i] = static_cast<double>(pooled.counts[r0 + i].uncensored) /
                  static_cast<double>(pooled.m);
    report.iterations = 1;
    report.final_delta = 0.0;
    report.residual = residual_of(pooled, r0, active);
    return Fit{ assemble(active), report };
  }

  IterationState state;
  state.masses.assign(q - r0, 1.0 / static_cast<double>(q - r0));
  state.damping = cfg.damping;
  bool converged = iterate(pooled, r0, cfg, state);

  // Masses converging to zero on censored-only atoms approach the boundary
  // slowly; set them to zero outright, then keep every zero-mass atom there
  // only while the likelihood gradient confirms the boundary optimum.
  for (int round = 0; converged && round < kPruneRounds; ++round) {
    const auto parts = phi_parts(pooled, r0, state.masses);
    bool changed = false;
    for (std::size_t i = 0; i + 1 < state.masses.size(); ++i) {
      const double a = state.masses[i];
      if (pooled.counts[r0 + i].uncensored == 0 && a > 0.0 && a < kPruneLevel / k &&
          parts.phi[i] < a) {
        state.masses[i] = 0.0;
        changed = true;
      }
    }
    if (changed) {
      renormalize(state.masses);
      converged = iterate(pooled, r0, cfg, state);
      if (!converged)
        break;
    }

    const auto check = phi_parts(pooled, r0, state.masses);
    bool restored = false;
    for (std::size_t i = 0; i < state.masses.size(); ++i) {
      if (state.masses[i] == 0.0 && check.gradient[i] > k * (1.0 + kKktSlack)) {
        state.masses[i] = 1.0 / (k * k);
        restored = true;
      }
    }
    if (restored) {
      renormalize(state.masses);
      converged = iterate(pooled, r0, cfg, state);
    }
    if (!changed && !restored)
      break;
  }

  report.iterations = state.iterations;
  report.final_delta = state.delta;
  report.damping_triggered = state.damping_triggered;
  report.pruned =
    static_cast<std::size_t>(std::count(state.masses.begin(), state.masses.end(), 0.0));
  report.residual = residual_of(pooled, r0, state.masses);
  Fit fit{ assemble(state.masses), report };
  if (!converged)
    throw NonConvergence(std::move(fit));
  return fit;
}

double score_residual(const DiscreteDist& dist, const MCSample& sample, double gamma)
{
  const PooledAtoms pooled = pool(sample);
  const auto atoms = dist.atoms();
  if (!std::equal(atoms.begin(), atoms.end(), pooled.atoms.begin(), pooled.atoms.end()))
    throw std::invalid_argument("score_residual: distribution is not on the pooled sample atoms");
  const auto r0 = static_cast<std::size_t>(
    std::lower_bound(pooled.atoms.begin(), pooled.atoms.end(), gamma) - pooled.atoms.begin());
  if (r0 == pooled.atoms.size())
    return 0.0;
  const auto masses = dist.masses();
  return residual_of(pooled, r0, masses.subspan(r0));
}

double sup_distance(const DiscreteDist& dist, const TrueModel& model, std::size_t grid_n)
{
  if (grid_n < 2)
    throw std::invalid_argument("sup_distance: grid_n must be at least 2");
  double upper = dist.atoms().back();
  const double model_upper = model.effective_upper();
  if (std::isfinite(model_upper))
    upper = std::max(upper, model_upper);

  double worst = 0.0;
  for (const double t : dist.atoms())
    worst = std::max(worst, std::abs(dist.cdf(t) - model.cdf(t)));
  for (std::size_t j = 0; j < grid_n; ++j) {
    const double t = upper * static_cast<double>(j) / static_cast<double>(grid_n - 1);
    worst = std::max(worst, std::abs(dist.cdf(t) - model.cdf(t)));
  }
  return worst;
}

} // namespace mcens
