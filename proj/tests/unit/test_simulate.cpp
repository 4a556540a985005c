#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "mcens/npmle.hpp"
#include "mcens/simulate.hpp"
#include "support/oracles.hpp"

using namespace mcens;
using doctest::Approx;

namespace {
const double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("gen_mc with a point mass")
{
  const MCSample s = gen_mc(TrueModel::point_mass(2.0), 0, 3, 17);
  REQUIRE(s.m() == 0);
  REQUIRE(s.n() == 3);
  for (const double y : s.y) {
    CHECK(y > 0.0);
    CHECK(y <= 2.0);
  }
  CHECK(s.phat() == 0.0);
  // y / 2 are the uniforms drawn after each z from the same stream.
  Rng rng = Rng{ 17 };
  for (const double y : s.y) {
    (void)TrueModel::point_mass(2.0).sample(rng);
    CHECK(y / 2.0 == open_uniform(rng));
  }
}

TEST_CASE("gen_mc is deterministic and seed-sensitive")
{
  const TrueModel g = TrueModel::gamma(5.0, 1.0);
  const MCSample a = gen_mc(g, 20, 30, 123);
  const MCSample b = gen_mc(g, 20, 30, 123);
  const MCSample c = gen_mc(g, 20, 30, 124);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(a.x != c.x);
  CHECK_THROWS_AS(gen_mc(g, 0, 0, 1), std::invalid_argument);
}

TEST_CASE("censored draws follow the mixture law")
{
  const TrueModel g = TrueModel::gamma(5.0, 1.0);
  const std::size_t n = 100000;
  const MCSample s = gen_mc(g, 0, n, 2024);
  // F(t) = G(t) + t \int_t^inf z^{-1} g(z) dz; the tail integral by quadrature.
  auto F = [&](double t) {
    if (t <= 0.0)
      return 0.0;
    const double tail =
      oracle::gauss5([](double z) { return oracle::gamma_pdf(5.0, 1.0, z) / z; }, t, t + 60.0, 300);
    return g.cdf(t) + t * tail;
  };
  std::vector<double> y = s.y;
  std::sort(y.begin(), y.end());
  double d = 0.0;
  for (std::size_t i = 0; i < n; i += 7) {
    const double f = F(y[i]);
    d = std::max({ d,
                   std::abs(static_cast<double>(i + 1) / static_cast<double>(n) - f),
                   std::abs(static_cast<double>(i) / static_cast<double>(n) - f) });
  }
  CHECK(d < 0.02);
  CHECK(d < 1.63 / std::sqrt(static_cast<double>(n)) + 1e-3);
}

TEST_CASE("gen_lb with a point-mass lifetime and no censoring")
{
  const LbSample s = gen_lb(TrueModel::point_mass(3.0), TrueModel::point_mass(kInf), 200, 0, 5);
  REQUIRE(s.records.size() == 200);
  double mean_age = 0.0;
  for (const auto& r : s.records) {
    CHECK(r.delta);
    CHECK(r.total() == Approx(3.0).epsilon(1e-15));
    CHECK(r.onset_age >= 0.0);
    CHECK(r.onset_age <= 3.0);
    mean_age += r.onset_age / 200.0;
  }
  CHECK(mean_age == Approx(1.5).epsilon(0.1));
}

TEST_CASE("gen_lb exhibits length bias and hits its quotas")
{
  const TrueModel fu = TrueModel::gamma(4.0, 1.0);
  const TrueModel censor = TrueModel::gamma(1.0, 5.0);
  const LbSample a = gen_lb(fu, censor, 50, 50, 77);
  const LbSample b = gen_lb(fu, censor, 50, 50, 77);
  std::size_t unc = 0;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].onset_age == b.records[i].onset_age);
    CHECK(a.records[i].followup == b.records[i].followup);
    unc += a.records[i].delta ? 1 : 0;
  }
  CHECK(unc == 50);
  CHECK(a.records.size() == 100);

  // Large run: uncensored totals average above the unbiased mean 4.
  const LbSample big = gen_lb(fu, censor, 50000, 0, 8);
  double mean_total = 0.0;
  for (const auto& r : big.records)
    mean_total += r.total() / 50000.0;
  CHECK(mean_total > fu.mean());
}

TEST_CASE("gen_lb uncensored totals follow g(t) times residual survival")
{
  // f_U = Gamma(2, 1), D ~ Exp(mean 2). Among uncensored records the total
  // has density proportional to t f_U(t) * (1/t) \int_0^t P(D > r) dr.
  const TrueModel fu = TrueModel::gamma(2.0, 1.0);
  const TrueModel censor = TrueModel::gamma(1.0, 2.0);
  const std::size_t n = 100000;
  const LbSample s = gen_lb(fu, censor, n, 0, 31);
  auto density = [](double t) {
    return oracle::gamma_pdf(2.0, 1.0, t) * 2.0 * (1.0 - std::exp(-t / 2.0));
  };
  const double norm = oracle::gauss5(density, 0.0, 60.0, 600);
  const std::vector<double> edges{ 0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 7.0, 60.0 };
  std::vector<double> counts(edges.size() - 1, 0.0);
  for (const auto& r : s.records) {
    const double t = r.total();
    for (std::size_t b = 0; b + 1 < edges.size(); ++b)
      if (t >= edges[b] && t < edges[b + 1])
        counts[b] += 1.0;
  }
  double chi2 = 0.0;
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    const double e =
      static_cast<double>(n) * oracle::gauss5(density, edges[b], edges[b + 1], 100) / norm;
    chi2 += (counts[b] - e) * (counts[b] - e) / e;
  }
  // 9 degrees of freedom, 0.001 critical value 27.88.
  CHECK(chi2 < 27.88);
}

TEST_CASE("gen_lb rejects unreachable quotas")
{
  // No censoring possible, so a censored quota can never be met.
  CHECK_THROWS_AS(gen_lb(TrueModel::point_mass(1.0), TrueModel::point_mass(kInf), 1, 1, 3),
                  std::runtime_error);
}

TEST_CASE("lb_to_mc partitions by delta")
{
  LbSample s;
  s.records = { { 1.0, 2.0, true }, { 0.5, 0.25, false }, { 2.0, 1.0, true } };
  const MCSample mc = lb_to_mc(s);
  CHECK(mc.x == std::vector<double>{ 3.0, 3.0 });
  CHECK(mc.y == std::vector<double>{ 0.75 });

  LbSample all;
  all.records = { { 1.0, 1.0, true } };
  CHECK(lb_to_mc(all).n() == 0);
}

TEST_CASE("length-biased samples feed the solver")
{
  const LbSample s =
    gen_lb(TrueModel::gamma(4.0, 1.0), TrueModel::gamma(1.0, 5.0), 40, 40, 9);
  const Fit fit = solve_score(lb_to_mc(s));
  double total = 0.0;
  for (const double w : fit.dist.masses()) {
    CHECK(w >= 0.0);
    total += w;
  }
  CHECK(total == Approx(1.0).epsilon(1e-12));
}
