#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls into the library's numerics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace oracle {

inline double gamma_pdf(double shape, double scale, double x)
{
  if (x < 0.0)
    return 0.0;
  if (x == 0.0)
    return shape < 1.0 ? INFINITY : (shape == 1.0 ? 1.0 / scale : 0.0);
  return std::exp((shape - 1.0) * std::log(x) - x / scale - std::lgamma(shape) -
                  shape * std::log(scale));
}

// Composite trapezoid on a uniform grid.
inline double trapezoid(const std::function<double(double)>& f, double a, double b, std::size_t n)
{
  const double h = (b - a) / static_cast<double>(n);
  double s = 0.5 * (f(a) + f(b));
  for (std::size_t i = 1; i < n; ++i)
    s += f(a + h * static_cast<double>(i));
  return s * h;
}

// Gauss-Legendre 5 point rule on each of n panels.
inline double gauss5(const std::function<double(double)>& f, double a, double b, std::size_t n)
{
  static const double x[5] = { 0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640,
                               0.9061798459386640 };
  static const double w[5] = { 0.5688888888888889, 0.4786286704993665, 0.4786286704993665,
                               0.2369268850561891, 0.2369268850561891 };
  const double h = (b - a) / static_cast<double>(n);
  double s = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double mid = a + h * (static_cast<double>(p) + 0.5);
    for (int i = 0; i < 5; ++i)
      s += w[i] * f(mid + 0.5 * h * x[i]);
  }
  return s * 0.5 * h;
}

// f(y) = sum over atoms t >= y of w / t, term by term.
inline double censored_density(const std::vector<double>& t, const std::vector<double>& w, double y)
{
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] >= y)
      s += w[i] / t[i];
  return s;
}

// The self-consistency map written directly from its definition for
// distinct atoms t_1 < ... < t_k with censoring indicators delta (1 =
// uncensored); r0 is the first retained index. Quadratic time on purpose.
inline std::vector<double> phi(const std::vector<double>& t,
                               const std::vector<int>& delta,
                               const std::vector<double>& a,
                               std::size_t r0)
{
  const std::size_t k = t.size();
  std::vector<double> out(k, 0.0);
  for (std::size_t i = r0; i < k; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      if (delta[j] == 1)
        continue;
      double denom = 0.0;
      for (std::size_t q = std::max(j, r0); q < k; ++q)
        denom += a[q] / t[q];
      acc += 1.0 / denom;
    }
    out[i] = (static_cast<double>(delta[i]) + a[i] / t[i] * acc) / static_cast<double>(k);
  }
  return out;
}

// Kolmogorov distance between a step cdf on atoms and a continuous cdf.
inline double ks_distance(const std::vector<double>& atoms,
                          const std::vector<double>& masses,
                          const std::function<double(double)>& cdf)
{
  double d = 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const double f = cdf(atoms[i]);
    d = std::max(d, std::abs(acc - f));
    acc += masses[i];
    d = std::max(d, std::abs(acc - f));
  }
  return d;
}

inline double median(std::vector<double> v)
{
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace oracle
