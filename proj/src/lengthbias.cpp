#include "mcens/lengthbias.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mcens/parallel.hpp"
#include "mcens/quadrature.hpp"
#include "mcens/rng.hpp"

namespace mcens {

namespace {

// Below this uncensored fraction the covariance operator need not be invertible.
constexpr double kInvertibilityThreshold = 0.59;
constexpr std::size_t kSigmaPanels = 256;

void require_increasing(std::span<const double> grid, const char* who)
{
  if (grid.empty())
    throw std::invalid_argument(std::string(who) + ": empty grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!std::isfinite(grid[i]) || (i > 0 && !(grid[i] > grid[i - 1])))
      throw std::invalid_argument(std::string(who) + ": grid must be strictly increasing");
  }
}

std::string format_point(double v)
{
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

// Index of the last element <= v (caller guarantees one exists).
std::size_t floor_index(std::span<const double> grid, double v)
{
  return static_cast<std::size_t>(std::upper_bound(grid.begin(), grid.end(), v) - grid.begin()) -
         1;
}

} // namespace

UnbiasedEstimate unbiased_cdf(const DiscreteDist& dist)
{
  const auto atoms = dist.atoms();
  const auto masses = dist.masses();
  std::vector<double> w(atoms.size());
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (!(atoms[i] > 0.0))
      throw std::invalid_argument("unbiased_cdf: atoms must be positive");
    w[i] = masses[i] / atoms[i];
  }
  const double mu = stable_sum(w);
  for (double& v : w)
    v /= mu;
  const std::vector<double> a(atoms.begin(), atoms.end());
  std::vector<AtomCounts> counts(dist.counts().begin(), dist.counts().end());
  return UnbiasedEstimate{ dist, mu, DiscreteDist(a, std::move(w), std::move(counts)) };
}

KdeEstimate kde_unbiased(const UnbiasedEstimate& ue, const Kernel& kernel, double h)
{
  return KdeEstimate(ue.fu, kernel, h);
}

// ---------------------------------------------------------------------------
// CovGrid

CovGrid::CovGrid(std::vector<double> grid, std::vector<double> values)
  : grid_(std::move(grid))
  , values_(std::move(values))
{
  require_increasing(grid_, "CovGrid");
  if (values_.size() != grid_.size() * grid_.size())
    throw std::invalid_argument("CovGrid: value matrix does not match the grid");
}

double CovGrid::interpolate(double s, double t) const
{
  const double lo = grid_.front();
  const double hi = grid_.back();
  if (s < lo || s > hi || t < lo || t > hi)
    throw GridMismatch("covariance requested at (" + format_point(s) + ", " + format_point(t) +
                       ") outside the grid [" + format_point(lo) + ", " + format_point(hi) + "]");
  const std::size_t q = grid_.size();
  if (q == 1)
    return values_.front();
  auto cell = [&](double v) { return std::min(floor_index(grid_, v), q - 2); };
  const std::size_t i = cell(s);
  const std::size_t j = cell(t);
  const double fs = (s - grid_[i]) / (grid_[i + 1] - grid_[i]);
  const double ft = (t - grid_[j]) / (grid_[j + 1] - grid_[j]);
  const auto& v = *this;
  return (1 - fs) * (1 - ft) * v(i, j) + fs * (1 - ft) * v(i + 1, j) + (1 - fs) * ft * v(i, j + 1) +
         fs * ft * v(i + 1, j + 1);
}

// ---------------------------------------------------------------------------
// Closed-form plug-in

CovGrid psi_u_explicit(const MCSample& totals,
                       const DiscreteDist& dist,
                       std::span<const double> grid,
                       const ExplicitCovOptions& options)
{
  validate(totals);
  require_increasing(grid, "psi_u_explicit");
  if (totals.m() == 0)
    throw std::invalid_argument("psi_u_explicit: needs uncensored subjects");
  if (!(grid.front() > 0.0))
    throw std::invalid_argument("psi_u_explicit: grid must be positive");

  const double p = totals.phat();
  const Kernel kernel = kernel_by_name(options.kernel);
  const CensoredDensity fhat(dist);
  const auto atoms = dist.atoms();
  const auto masses = dist.masses();

  std::vector<std::size_t> positive;
  for (std::size_t i = 0; i < atoms.size(); ++i)
    if (masses[i] > 0.0)
      positive.push_back(i);
  const double first_atom = atoms[positive.front()];
  const double last_atom = atoms[positive.back()];
  for (const double s : grid)
    if (s > last_atom)
      throw std::invalid_argument("psi_u_explicit: f_hat vanishes at grid point " +
                                  format_point(s) + " (largest support point " +
                                  format_point(last_atom) + ")");

  const std::size_t q = grid.size();
  std::vector<double> values(q * q, 0.0);
  CovGrid out;

  // zeta = g / (p g*), with g smoothed from G_hat and g* from the uncensored totals.
  const double h_ref = bandwidth_reference(totals.x, kernel);
  const KdeEstimate g_hat(dist, kernel, h_ref);
  const KdeEstimate g_star(DiscreteDist::empirical(totals.x), kernel, h_ref);
  auto zeta = [&](double z) {
    const double denom = p * g_star(z);
    if (!(denom > 0.0))
      throw std::invalid_argument("psi_u_explicit: smoothed uncensored density vanishes at " +
                                  format_point(z));
    return g_hat(z) / denom;
  };

  if (options.include_uncensored_term) {
    std::vector<double> x = totals.x;
    std::sort(x.begin(), x.end());
    const double m = static_cast<double>(x.size());
    std::vector<double> sq(q, 0.0);
    std::vector<double> lin(q, 0.0);
    std::size_t gi = 0;
    double acc_sq = 0.0;
    double acc_lin = 0.0;
    for (std::size_t i = 0; i <= x.size(); ++i) {
      while (gi < q && (i == x.size() || x[i] > grid[gi])) {
        sq[gi] = acc_sq / m;
        lin[gi] = acc_lin / m;
        ++gi;
      }
      if (i == x.size())
        break;
      const double z = zeta(x[i]);
      acc_sq += z * z;
      acc_lin += z;
    }
    for (std::size_t i = 0; i < q; ++i)
      for (std::size_t j = i; j < q; ++j)
        values[i * q + j] += p * (sq[i] - lin[i] * lin[j]);
  }

  if (totals.n() > 0 && grid.back() > first_atom) {
    // 1/f_hat jumps just after each support point; F* is the censored-total ecdf.
    std::vector<double> ystar = totals.y;
    std::sort(ystar.begin(), ystar.end());
    auto fstar = [&](double v) {
      return static_cast<double>(std::upper_bound(ystar.begin(), ystar.end(), v) - ystar.begin()) /
             static_cast<double>(ystar.size());
    };
    std::vector<double> jump_at;
    std::vector<double> h_after;
    std::vector<double> e_after;
    double h_acc = 0.0;
    double e_acc = 0.0;
    for (std::size_t r = 0; r + 1 < positive.size(); ++r) {
      const std::size_t i = positive[r];
      const double before = 1.0 / fhat.at_index(i);
      const double after = 1.0 / fhat.at_index(positive[r + 1]);
      const double step = after - before;
      const double fs = fstar(atoms[i]);
      // Midpoint value of h across its own jump keeps e = 2 \int h d(1/f) exact
      // for piecewise-constant F*.
      e_acc += 2.0 * (h_acc + 0.5 * fs * step) * step;
      h_acc += fs * step;
      jump_at.push_back(atoms[i]);
      h_after.push_back(h_acc);
      e_after.push_back(e_acc);
    }
    auto jumps_below = [&](double v) {
      return static_cast<std::size_t>(std::lower_bound(jump_at.begin(), jump_at.end(), v) -
                                      jump_at.begin());
    };
    auto h_of = [&](double v) {
      const std::size_t c = jumps_below(v);
      return c == 0 ? 0.0 : h_after[c - 1];
    };
    auto e_of = [&](double v) {
      const std::size_t c = jumps_below(v);
      return c == 0 ? 0.0 : e_after[c - 1];
    };

    std::vector<double> nodes;
    const double lo = first_atom;
    const double hi = grid.back();
    const std::size_t cells = std::max<std::size_t>(options.integration_cells, 1);
    for (std::size_t c = 0; c <= cells; ++c)
      nodes.push_back(lo + (hi - lo) * static_cast<double>(c) / static_cast<double>(cells));
    nodes.back() = hi;
    for (const double s : grid)
      if (s > lo && s < hi)
        nodes.push_back(s);
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

    const std::size_t nc = nodes.size() - 1;
    std::vector<double> mid(nc);
    std::vector<double> dzeta(nc);
    std::vector<double> f_mid(nc);
    std::vector<double> h_mid(nc);
    double z_prev = zeta(nodes[0]);
    for (std::size_t c = 0; c < nc; ++c) {
      const double z_next = zeta(nodes[c + 1]);
      mid[c] = 0.5 * (nodes[c] + nodes[c + 1]);
      dzeta[c] = z_next - z_prev;
      z_prev = z_next;
      f_mid[c] = fhat(mid[c]);
      h_mid[c] = h_of(mid[c]);
    }

    // prefix[a][b] = sum over cells a' < a, b' < b of the weighted integrand.
    std::vector<double> prefix((nc + 1) * (nc + 1), 0.0);
    auto P = [&](std::size_t a, std::size_t b) -> double& { return prefix[a * (nc + 1) + b]; };
    for (std::size_t a = 0; a < nc; ++a) {
      double row = 0.0;
      for (std::size_t b = 0; b < nc; ++b) {
        const std::size_t lo_c = std::min(a, b);
        const std::size_t hi_c = std::max(a, b);
        const double inner = e_of(mid[lo_c]) +
                             h_mid[lo_c] * (1.0 / f_mid[hi_c] - 1.0 / f_mid[lo_c]) -
                             h_mid[a] * h_mid[b];
        row += f_mid[a] * f_mid[b] * inner * dzeta[a] * dzeta[b];
        P(a + 1, b + 1) = P(a, b + 1) + row;
      }
    }
    auto cells_up_to = [&](double s) {
      if (s <= lo)
        return std::size_t{ 0 };
      return static_cast<std::size_t>(std::upper_bound(nodes.begin(), nodes.end(), s) -
                                      nodes.begin()) -
             1;
    };
    for (std::size_t i = 0; i < q; ++i) {
      const std::size_t ai = cells_up_to(grid[i]);
      for (std::size_t j = i; j < q; ++j)
        values[i * q + j] += (1.0 - p) * P(ai, cells_up_to(grid[j]));
    }
  }

  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = 0; j < i; ++j)
      values[i * q + j] = values[j * q + i];

  out = CovGrid(std::vector<double>(grid.begin(), grid.end()), std::move(values));
  if (p <= kInvertibilityThreshold)
    out.warnings.push_back("uncensored fraction " + format_point(p) +
                           " <= 0.59: consistency of the closed form is not guaranteed");
  if (!options.include_uncensored_term)
    out.warnings.push_back("uncensored term omitted: censored contribution only");
  return out;
}

CovGrid psi_u_explicit(const LbSample& lb,
                       const DiscreteDist& dist,
                       std::span<const double> grid,
                       const ExplicitCovOptions& options)
{
  return psi_u_explicit(lb_to_mc(lb), dist, grid, options);
}

// ---------------------------------------------------------------------------
// Bootstrap

BootstrapResult psi_u_bootstrap(const MCSample& sample,
                                std::size_t resamples,
                                std::span<const double> grid,
                                std::uint64_t seed,
                                const BootstrapOptions& options)
{
  validate(sample);
  require_increasing(grid, "psi_u_bootstrap");
  if (resamples < 2)
    throw std::invalid_argument("psi_u_bootstrap: needs at least two resamples");

  const std::size_t q = grid.size();
  const double root_k = std::sqrt(static_cast<double>(sample.k()));
  const std::size_t max_failures = 10 * resamples;
  std::vector<double> draws(resamples * q);
  std::vector<std::size_t> failures(resamples, 0);

  parallel_for(resamples, options.threads, [&](std::size_t b) {
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt > max_failures)
        throw std::runtime_error("psi_u_bootstrap: resample " + std::to_string(b) +
                                 " failed repeatedly");
      Rng rng = make_rng(seed, b, attempt);
      MCSample star;
      star.x.resize(sample.m());
      star.y.resize(sample.n());
      std::uniform_int_distribution<std::size_t> pick_x(0, sample.m() == 0 ? 0 : sample.m() - 1);
      std::uniform_int_distribution<std::size_t> pick_y(0, sample.n() == 0 ? 0 : sample.n() - 1);
      for (auto& v : star.x)
        v = sample.x[pick_x(rng)];
      for (auto& v : star.y)
        v = sample.y[pick_y(rng)];
      try {
        const Fit fit = solve_score(star, options.solver);
        for (std::size_t g = 0; g < q; ++g)
          draws[b * q + g] = root_k * fit.dist.cdf(grid[g]);
        return;
      } catch (const NonConvergence&) {
      } catch (const DegenerateTruncation&) {
      }
      ++failures[b];
    }
  });

  BootstrapResult result;
  for (const std::size_t f : failures)
    result.failures += f;
  if (result.failures > max_failures)
    throw std::runtime_error("psi_u_bootstrap: " + std::to_string(result.failures) +
                             " failed resamples exceed 10 B");

  std::vector<double> mean(q, 0.0);
  for (std::size_t b = 0; b < resamples; ++b)
    for (std::size_t g = 0; g < q; ++g)
      mean[g] += draws[b * q + g];
  for (double& v : mean)
    v /= static_cast<double>(resamples);

  std::vector<double> cov(q * q, 0.0);
  for (std::size_t b = 0; b < resamples; ++b)
    for (std::size_t i = 0; i < q; ++i) {
      const double di = draws[b * q + i] - mean[i];
      for (std::size_t j = i; j < q; ++j)
        cov[i * q + j] += di * (draws[b * q + j] - mean[j]);
    }
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = i; j < q; ++j) {
      cov[i * q + j] /= static_cast<double>(resamples - 1);
      cov[j * q + i] = cov[i * q + j];
    }
  result.cov = CovGrid(std::vector<double>(grid.begin(), grid.end()), std::move(cov));
  return result;
}

BootstrapResult psi_u_bootstrap(const LbSample& sample,
                                std::size_t resamples,
                                std::span<const double> grid,
                                std::uint64_t seed,
                                const BootstrapOptions& options)
{
  return psi_u_bootstrap(lb_to_mc(sample), resamples, grid, seed, options);
}

// ---------------------------------------------------------------------------

CovGrid psi_z_hat(const CovGrid& psi_u, const UnbiasedEstimate& ue, std::span<const double> grid)
{
  require_increasing(grid, "psi_z_hat");
  const auto nodes = psi_u.grid();
  const std::size_t nn = nodes.size();
  for (const double s : grid) {
    const auto it = std::lower_bound(nodes.begin(), nodes.end(), s);
    if (it == nodes.end() || std::abs(*it - s) > 1e-12 * std::max(1.0, std::abs(s)))
      throw GridMismatch("psi_z_hat: point " + format_point(s) +
                         " is not on the psi_U grid");
  }
  const std::size_t q = grid.size();
  if (nn < 2)
    return CovGrid(std::vector<double>(grid.begin(), grid.end()), std::vector<double>(q * q, 0.0));

  // Cell-averaged psi_U on consecutive grid cells.
  const std::size_t nc = nn - 1;
  std::vector<double> avg(nc * nc);
  for (std::size_t a = 0; a < nc; ++a)
    for (std::size_t b = 0; b < nc; ++b)
      avg[a * nc + b] =
        0.25 * (psi_u(a, b) + psi_u(a + 1, b) + psi_u(a, b + 1) + psi_u(a + 1, b + 1));

  // Increments of L_u(z) = z^{-1} [1{z <= u} - F_U_hat(u)] across each cell.
  std::vector<std::vector<double>> dl(q, std::vector<double>(nc));
  for (std::size_t g = 0; g < q; ++g) {
    const double u = grid[g];
    const double fu = ue.fu.cdf(u);
    auto L = [&](double z) { return ((z <= u ? 1.0 : 0.0) - fu) / z; };
    for (std::size_t c = 0; c < nc; ++c)
      dl[g][c] = L(nodes[c + 1]) - L(nodes[c]);
  }

  const double scale = 1.0 / (ue.mu_u_hat * ue.mu_u_hat);
  std::vector<double> values(q * q);
  std::vector<double> tmp(nc);
  for (std::size_t j = 0; j < q; ++j) {
    for (std::size_t a = 0; a < nc; ++a) {
      double acc = 0.0;
      for (std::size_t b = 0; b < nc; ++b)
        acc += avg[a * nc + b] * dl[j][b];
      tmp[a] = acc;
    }
    for (std::size_t i = 0; i <= j; ++i) {
      double acc = 0.0;
      for (std::size_t a = 0; a < nc; ++a)
        acc += dl[i][a] * tmp[a];
      values[i * q + j] = values[j * q + i] = scale * acc;
    }
  }
  return CovGrid(std::vector<double>(grid.begin(), grid.end()), std::move(values));
}

double sigma_hat(const CovGrid& psi, const Kernel& kernel, double h, double s, double t)
{
  if (!(h > 0.0))
    throw std::invalid_argument("sigma_hat: bandwidth must be positive");
  const auto g = psi.grid();
  if (s - h < g.front() || s + h > g.back() || t - h < g.front() || t + h > g.back())
    throw GridMismatch("sigma_hat: psi grid does not cover the kernel window around (" +
                       format_point(s) + ", " + format_point(t) + ")");
  // K' on the closed interval: the endpoint values are one-sided limits.
  auto dk = [&](double u) { return kernel.derivative(std::clamp(u, -1.0 + 1e-15, 1.0 - 1e-15)); };
  const double value = simpson(
    [&](double u) {
      const double du = dk(u);
      if (du == 0.0)
        return 0.0;
      return du * simpson([&](double v) { return psi.interpolate(s - u * h, t - v * h) * dk(v); },
                          -1.0,
                          1.0,
                          kSigmaPanels);
    },
    -1.0,
    1.0,
    kSigmaPanels);
  return value / h;
}

} // namespace mcens
