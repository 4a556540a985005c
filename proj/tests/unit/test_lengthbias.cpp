#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "mcens/lengthbias.hpp"
#include "mcens/parallel.hpp"
#include "mcens/rng.hpp"
#include "support/oracles.hpp"

using namespace mcens;
using doctest::Approx;

namespace {

Eigen::MatrixXd as_matrix(const CovGrid& c)
{
  Eigen::MatrixXd m(c.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = 0; j < c.size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c(i, j);
  return m;
}

double kde_mass(const KdeEstimate& est)
{
  const double h = est.bandwidth();
  return oracle::gauss5([&](double t) { return est(t); },
                        est.dist().atoms().front() - h,
                        est.dist().atoms().back() + h,
                        20000);
}

// Monte Carlo covariance of sqrt(k) (G_hat - G) with fourth-moment standard errors.
struct McCov
{
  Eigen::MatrixXd cov;
  Eigen::MatrixXd se;
};

McCov mc_covariance(const std::vector<std::vector<double>>& draws)
{
  const auto r = static_cast<double>(draws.size());
  const std::size_t q = draws.front().size();
  std::vector<double> mean(q, 0.0);
  for (const auto& d : draws)
    for (std::size_t i = 0; i < q; ++i)
      mean[i] += d[i] / r;
  McCov out{ Eigen::MatrixXd::Zero(q, q), Eigen::MatrixXd::Zero(q, q) };
  Eigen::MatrixXd m4 = Eigen::MatrixXd::Zero(q, q);
  for (const auto& d : draws)
    for (std::size_t i = 0; i < q; ++i)
      for (std::size_t j = 0; j < q; ++j) {
        const double v = (d[i] - mean[i]) * (d[j] - mean[j]);
        out.cov(i, j) += v / (r - 1.0);
        m4(i, j) += v * v / r;
      }
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = 0; j < q; ++j)
      out.se(i, j) = std::sqrt(std::max(0.0, m4(i, j) - out.cov(i, j) * out.cov(i, j)) / r);
  return out;
}

} // namespace

TEST_CASE("unbiased cdf of simple laws")
{
  const UnbiasedEstimate pm = unbiased_cdf(DiscreteDist::point_mass(2.5));
  REQUIRE(pm.fu.size() == 1);
  CHECK(pm.fu.atoms()[0] == 2.5);
  CHECK(pm.fu.masses()[0] == 1.0);
  CHECK(pm.mu_u_hat == Approx(0.4).epsilon(1e-15));

  const UnbiasedEstimate two = unbiased_cdf(DiscreteDist({ 1.0, 2.0 }, { 0.5, 0.5 }));
  CHECK(two.fu.masses()[0] == Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(two.fu.masses()[1] == Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(two.mu_u_hat == Approx(0.75).epsilon(1e-15));

  CHECK_THROWS_AS(unbiased_cdf(DiscreteDist({ 0.0, 1.0 }, { 0.5, 0.5 })), std::invalid_argument);
}

TEST_CASE("unbiased cdf of a discretized Gamma(5) is close to Gamma(4)")
{
  const TrueModel g = TrueModel::gamma(5.0);
  const TrueModel fu = TrueModel::gamma(4.0);
  const std::size_t n = 20000;
  std::vector<double> atoms(n);
  for (std::size_t i = 0; i < n; ++i)
    atoms[i] = g.quantile((static_cast<double>(i) + 0.5) / static_cast<double>(n));
  const UnbiasedEstimate ue =
    unbiased_cdf(DiscreteDist(atoms, std::vector<double>(n, 1.0 / static_cast<double>(n))));
  double total = 0.0;
  for (const double w : ue.fu.masses())
    total += w;
  CHECK(std::abs(total - 1.0) < 1e-12);
  double ks = 0.0;
  double cum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double before = cum;
    cum += ue.fu.masses()[i];
    const double f = fu.cdf(ue.fu.atoms()[i]);
    ks = std::max({ ks, std::abs(cum - f), std::abs(before - f) });
  }
  CHECK(ks < 0.02);
  // mu_U of Gamma(4) is 4, so the normaliser is 1/4.
  CHECK(ue.mu_u_hat == Approx(0.25).epsilon(1e-2));
}

TEST_CASE("kde of the unbiased estimate")
{
  const Kernel k = kernel_epanechnikov();
  const UnbiasedEstimate pm = unbiased_cdf(DiscreteDist::point_mass(3.0));
  const KdeEstimate est = kde_unbiased(pm, k, 0.7);
  for (double t = 1.5; t < 4.5; t += 0.13)
    CHECK(est(t) == Approx(k((t - 3.0) / 0.7) / 0.7).epsilon(1e-14));

  const Fit fit = solve_score(gen_mc(TrueModel::gamma(5.0), 80, 80, 3));
  const KdeEstimate smooth = kde_unbiased(unbiased_cdf(fit.dist), k, 0.6);
  CHECK(std::abs(kde_mass(smooth) - 1.0) < 1e-6);
  CHECK_THROWS_AS(kde_unbiased(pm, k, 0.0), std::invalid_argument);
}

TEST_CASE("unbiased density from a Gamma(5) fit at k = 5000")
{
  const TrueModel g = TrueModel::gamma(5.0);
  const TrueModel fu = TrueModel::gamma(4.0);
  const Kernel k = kernel_epanechnikov();
  const double upper = fu.quantile(0.95);
  std::vector<double> sups(10);
  parallel_for(10, 0, [&](std::size_t r) {
    const MCSample s = gen_mc(g, 2500, 2500, derive_seed(404, 5000, r));
    const Fit fit = solve_score(s);
    const KdeEstimate est = kde_unbiased(unbiased_cdf(fit.dist), k, bandwidth_reference(s, k));
    double sup = 0.0;
    for (int i = 0; i <= 400; ++i) {
      const double t = 0.5 + (upper - 0.5) * i / 400.0;
      sup = std::max(sup, std::abs(est(t) - fu.pdf(t)));
    }
    sups[r] = sup;
  });
  CHECK(oracle::median(sups) < 0.05);
}

TEST_CASE("cov grid")
{
  CHECK_THROWS_AS(CovGrid({ 1.0, 1.0 }, std::vector<double>(4, 0.0)), std::invalid_argument);
  CHECK_THROWS_AS(CovGrid({ 1.0, 2.0 }, std::vector<double>(3, 0.0)), std::invalid_argument);
  const CovGrid c({ 1.0, 2.0 }, { 1.0, 2.0, 2.0, 4.0 });
  CHECK(c.interpolate(1.0, 2.0) == 2.0);
  CHECK(c.interpolate(1.5, 1.5) == Approx(2.25));
  CHECK(c.interpolate(1.25, 2.0) == Approx(2.5));
  CHECK_THROWS_AS(c.interpolate(0.5, 1.5), GridMismatch);
}

TEST_CASE("explicit covariance without censoring is the bridge covariance")
{
  const MCSample s = gen_mc(TrueModel::gamma(5.0), 300, 0, 71);
  const Fit fit = solve_score(s);
  const std::vector<double> grid{ 2.5, 3.5, 4.5, 6.0, 8.0 };
  const CovGrid c = psi_u_explicit(s, fit.dist, grid);
  auto ecdf = [&](double t) {
    double n = 0.0;
    for (const double x : s.x)
      n += x <= t ? 1.0 : 0.0;
    return n / static_cast<double>(s.x.size());
  };
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (std::size_t j = 0; j < grid.size(); ++j) {
      const double a = ecdf(std::min(grid[i], grid[j]));
      const double expected = a - ecdf(grid[i]) * ecdf(grid[j]);
      CHECK(c(i, j) == Approx(expected).epsilon(1e-12));
    }
  CHECK(c.warnings.empty());
}

TEST_CASE("explicit covariance is symmetric and guards its range")
{
  const LbSample lb = gen_lb(TrueModel::gamma(4.0), TrueModel::gamma(1.0, 5.0), 120, 60, 5);
  const MCSample s = lb_to_mc(lb);
  const Fit fit = solve_score(s);
  const std::vector<double> grid{ 2.0, 3.0, 4.0, 5.5, 7.0 };
  const CovGrid c = psi_u_explicit(lb, fit.dist, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(c(i, i) >= -1e-8);
    for (std::size_t j = 0; j < grid.size(); ++j)
      CHECK(c(i, j) == c(j, i));
  }
  // Same totals, same answer.
  const CovGrid d = psi_u_explicit(s, fit.dist, grid);
  for (std::size_t i = 0; i < c.values().size(); ++i)
    CHECK(c.values()[i] == d.values()[i]);
  CHECK(c.warnings.empty());

  const std::vector<double> beyond{ 2.0, fit.dist.atoms().back() + 1.0 };
  try {
    (void)psi_u_explicit(s, fit.dist, beyond);
    FAIL("expected a range error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("grid point") != std::string::npos);
  }

  ExplicitCovOptions only;
  only.include_uncensored_term = false;
  const CovGrid cens = psi_u_explicit(s, fit.dist, grid, only);
  CHECK(!cens.warnings.empty());

  const LbSample heavy = gen_lb(TrueModel::gamma(4.0), TrueModel::gamma(1.0, 5.0), 50, 60, 6);
  const MCSample hs = lb_to_mc(heavy);
  const CovGrid w = psi_u_explicit(hs, solve_score(hs).dist, grid);
  REQUIRE(!w.warnings.empty());
  CHECK(w.warnings.front().find("0.59") != std::string::npos);
}

TEST_CASE("explicit covariance against Monte Carlo at k = 2000")
{
  const TrueModel fu = TrueModel::gamma(4.0);
  const TrueModel g = fu.length_biased();
  const TrueModel censor = TrueModel::gamma(1.0, 10.0);
  const std::vector<double> grid{ 3.0, 4.0, 5.0, 6.0, 7.0 };
  const std::size_t k = 2000;
  const std::size_t m = 1600;
  const std::size_t reps = 400;
  std::vector<std::vector<double>> draws(reps, std::vector<double>(grid.size()));
  parallel_for(reps, 0, [&](std::size_t r) {
    const Fit fit = solve_score(lb_to_mc(gen_lb(fu, censor, m, k - m, derive_seed(5, 1, r))));
    for (std::size_t i = 0; i < grid.size(); ++i)
      draws[r][i] = std::sqrt(static_cast<double>(k)) * (fit.dist.cdf(grid[i]) - g.cdf(grid[i]));
  });
  const McCov mc = mc_covariance(draws);

  const MCSample s = lb_to_mc(gen_lb(fu, censor, m, k - m, derive_seed(77, 0, 0)));
  const CovGrid c = psi_u_explicit(s, solve_score(s).dist, grid);
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (std::size_t j = i; j < grid.size(); ++j) {
      CAPTURE(i);
      CAPTURE(j);
      CAPTURE(mc.cov(i, j));
      CHECK(std::abs(c(i, j) - mc.cov(i, j)) <= 3.0 * mc.se(i, j));
    }
}

TEST_CASE("bootstrap of degenerate data is exactly zero")
{
  const MCSample s{ { 3.0, 3.0, 3.0 }, {} };
  const std::vector<double> grid{ 2.0, 3.0, 4.0 };
  const BootstrapResult b = psi_u_bootstrap(s, 2, grid, 1);
  for (const double v : b.cov.values())
    CHECK(v == 0.0);
  CHECK(b.failures == 0);
  CHECK_THROWS_AS(psi_u_bootstrap(s, 1, grid, 1), std::invalid_argument);
}

TEST_CASE("bootstrap covariance is positive semidefinite and thread invariant")
{
  const MCSample s = gen_mc(TrueModel::gamma(5.0), 60, 60, 8);
  const std::vector<double> grid{ 2.0, 3.5, 5.0, 6.5, 8.0 };
  BootstrapOptions one;
  one.threads = 1;
  BootstrapOptions four;
  four.threads = 4;
  const BootstrapResult a = psi_u_bootstrap(s, 60, grid, 99, one);
  const BootstrapResult b = psi_u_bootstrap(s, 60, grid, 99, four);
  REQUIRE(a.cov.values().size() == b.cov.values().size());
  for (std::size_t i = 0; i < a.cov.values().size(); ++i)
    CHECK(a.cov.values()[i] == b.cov.values()[i]);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(a.cov(i, i) >= 0.0);
    for (std::size_t j = 0; j < grid.size(); ++j)
      CHECK(a.cov(i, j) == a.cov(j, i));
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(as_matrix(a.cov));
  CHECK(eig.eigenvalues().minCoeff() >= -1e-8);

  // Length-biased input resamples the totals.
  const LbSample lb = gen_lb(TrueModel::gamma(4.0), TrueModel::gamma(1.0, 5.0), 40, 20, 2);
  const BootstrapResult l = psi_u_bootstrap(lb, 30, grid, 5);
  const BootstrapResult t = psi_u_bootstrap(lb_to_mc(lb), 30, grid, 5);
  for (std::size_t i = 0; i < l.cov.values().size(); ++i)
    CHECK(l.cov.values()[i] == t.cov.values()[i]);
}

TEST_CASE("bootstrap approaches the oracle covariance as k grows")
{
  const TrueModel g = TrueModel::gamma(5.0);
  const std::vector<double> grid{ 3.0, 4.0, 5.0, 6.0, 7.0 };
  auto frobenius_gap = [&](std::size_t k) {
    const std::size_t reps = 400;
    std::vector<std::vector<double>> draws(reps, std::vector<double>(grid.size()));
    parallel_for(reps, 0, [&](std::size_t r) {
      const Fit fit = solve_score(gen_mc(g, k / 2, k / 2, derive_seed(61, k, r)));
      for (std::size_t i = 0; i < grid.size(); ++i)
        draws[r][i] = std::sqrt(static_cast<double>(k)) * (fit.dist.cdf(grid[i]) - g.cdf(grid[i]));
    });
    const McCov mc = mc_covariance(draws);
    std::vector<double> gaps;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const MCSample s = gen_mc(g, k / 2, k / 2, derive_seed(62, k, seed));
      BootstrapOptions opt;
      opt.threads = 0;
      const BootstrapResult b = psi_u_bootstrap(s, 200, grid, seed, opt);
      gaps.push_back((as_matrix(b.cov) - mc.cov).norm());
    }
    return oracle::median(gaps);
  };
  const double small = frobenius_gap(250);
  const double large = frobenius_gap(1000);
  CAPTURE(small);
  CAPTURE(large);
  CHECK(large < small);
}

TEST_CASE("psi_z of a zero covariance is zero")
{
  const UnbiasedEstimate ue = unbiased_cdf(DiscreteDist({ 1.0, 2.0, 3.0 }, { 0.2, 0.5, 0.3 }));
  const CovGrid zero({ 1.0, 1.5, 2.0, 3.0 }, std::vector<double>(16, 0.0));
  const std::vector<double> pts{ 1.0, 2.0, 3.0 };
  const CovGrid z = psi_z_hat(zero, ue, pts);
  for (const double v : z.values())
    CHECK(v == 0.0);
}

TEST_CASE("psi_z from a point mass collapses to rank one")
{
  // F_U = delta_2, mu = 1/2. On the grid {1, 2, 4} with psi_U(x, y) = x y the
  // cell averages are 1.5 and 3. L_1 increments (-1, 0), L_2 (0, -1/4), L_4 zero,
  // so psi_Z(1,1) = 4 * 1.5^2, psi_Z(1,2) = 4 * 1.5 * 0.75, psi_Z(2,2) = 4 * 0.75^2.
  const UnbiasedEstimate ue = unbiased_cdf(DiscreteDist::point_mass(2.0));
  const std::vector<double> grid{ 1.0, 2.0, 4.0 };
  std::vector<double> vals;
  for (const double x : grid)
    for (const double y : grid)
      vals.push_back(x * y);
  const CovGrid psi(grid, vals);
  const CovGrid z = psi_z_hat(psi, ue, grid);
  CHECK(z(0, 0) == Approx(9.0).epsilon(1e-14));
  CHECK(z(0, 1) == Approx(4.5).epsilon(1e-14));
  CHECK(z(1, 1) == Approx(2.25).epsilon(1e-14));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(z(i, 2) == 0.0);
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(z(i, j) == z(j, i));
  }
  // Rank one: every 2x2 minor vanishes.
  CHECK(std::abs(z(0, 0) * z(1, 1) - z(0, 1) * z(1, 0)) < 1e-12);
}

TEST_CASE("psi_z is symmetric and checks its grid")
{
  const MCSample s = gen_mc(TrueModel::gamma(5.0), 60, 60, 14);
  const Fit fit = solve_score(s);
  const UnbiasedEstimate ue = unbiased_cdf(fit.dist);
  std::vector<double> grid;
  for (int i = 0; i <= 40; ++i)
    grid.push_back(1.0 + 0.2 * i);
  const BootstrapResult b = psi_u_bootstrap(s, 50, grid, 3);
  const std::vector<double> pts{ 2.0, 3.0, 5.0, 7.0 };
  const CovGrid z = psi_z_hat(b.cov, ue, pts);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = 0; j < pts.size(); ++j)
      CHECK(z(i, j) == z(j, i));
  CHECK_THROWS_AS(psi_z_hat(b.cov, ue, std::vector<double>{ 2.05 }), GridMismatch);
  CHECK_THROWS_AS(psi_z_hat(b.cov, ue, std::vector<double>{ 10.0 }), GridMismatch);
}

TEST_CASE("sigma_hat")
{
  const Kernel k = kernel_epanechnikov();
  std::vector<double> grid;
  for (int i = 0; i <= 200; ++i)
    grid.push_back(0.05 * i);
  std::vector<double> prod;
  std::vector<double> constant;
  for (const double x : grid)
    for (const double y : grid) {
      prod.push_back(x * y);
      constant.push_back(2.0);
    }
  const CovGrid xy(grid, prod);
  const CovGrid c(grid, constant);
  const double h = 0.8;
  // \int (s - u h) K'(u) du = h, so the double integral is h^2 and sigma = h.
  CHECK(std::abs(sigma_hat(xy, k, h, 4.0, 5.0) - h) < 1e-6);
  CHECK(std::abs(sigma_hat(c, k, h, 4.0, 5.0)) < 1e-10);

  // psi = min(x, y) is symmetric, so is sigma.
  std::vector<double> mn;
  for (const double x : grid)
    for (const double y : grid)
      mn.push_back(std::min(x, y));
  const CovGrid bm(grid, mn);
  CHECK(std::abs(sigma_hat(bm, k, 0.5, 3.0, 6.0) - sigma_hat(bm, k, 0.5, 6.0, 3.0)) < 1e-10);
  CHECK(sigma_hat(bm, k, 0.5, 4.0, 4.0) > 0.0);

  CHECK_THROWS_AS(sigma_hat(xy, k, h, 0.5, 5.0), GridMismatch);
  CHECK_THROWS_AS(sigma_hat(xy, k, h, 4.0, 9.5), GridMismatch);
}
