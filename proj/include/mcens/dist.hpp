#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace mcens {

using Rng = std::mt19937_64;

//! Gamma law with density x^{shape-1} e^{-x/scale} / (Gamma(shape) scale^shape).
struct GammaParams
{
  double shape = 1.0;
  double scale = 1.0;
};

void validate(const GammaParams& params);

double gamma_pdf(const GammaParams& params, double x);
double gamma_cdf(const GammaParams& params, double x);
double gamma_quantile(const GammaParams& params, double prob);
double gamma_second_deriv(const GammaParams& params, double x);

//! Integral of the squared second derivative of the gamma density over
//! [0, upper]. Exact, via lower incomplete gamma functions; +inf when the
//! integrand is not integrable at the origin (non-integer shape <= 2.5).
double gamma_l2_second_deriv(const GammaParams& params, double upper);

//! Degenerate law at `location`. An infinite location models an event that
//! never happens (e.g. no residual censoring).
struct PointMass
{
  double location = 1.0;
};

//! Ground-truth distribution on [0, inf) used by the simulators and oracles.
//! Immutable; the sampler draws from a caller-owned engine.
class TrueModel
{
public:
  using Family = std::variant<GammaParams, PointMass>;

  static TrueModel gamma(double shape, double scale = 1.0);
  static TrueModel point_mass(double location);

  double pdf(double x) const;
  double cdf(double x) const;
  double quantile(double prob) const;
  double second_deriv(double x) const;
  double sample(Rng& rng) const;
  double mean() const;

  //! sup{t : G(t) < 1}; may be +inf.
  double tau() const;
  //! tau when finite, otherwise the 0.9999 quantile.
  double effective_upper() const;
  //! ||g''||^2 on [0, effective_upper()], cached at construction.
  double l2_gpp() const { return l2_gpp_; }
  double l2_gpp(double upper) const;

  bool has_density() const;
  //! Law with density t f(t) / mean, i.e. the length-biased version.
  TrueModel length_biased() const;

  const Family& family() const { return family_; }
  std::string describe() const;

private:
  explicit TrueModel(Family family);

  Family family_;
  double l2_gpp_ = 0.0;
};

//! Multiplicities of the observations pooled into one atom.
struct AtomCounts
{
  std::size_t uncensored = 0;
  std::size_t censored = 0;

  bool operator==(const AtomCounts&) const = default;
};

//! Distribution putting mass w_i on atoms t_1 < ... < t_q, all t_i > 0.
class DiscreteDist
{
public:
  DiscreteDist(std::vector<double> atoms, std::vector<double> masses);
  DiscreteDist(std::vector<double> atoms,
               std::vector<double> masses,
               std::vector<AtomCounts> counts);

  static DiscreteDist point_mass(double location);
  //! Empirical law of `values`; exact ties are merged.
  static DiscreteDist empirical(std::span<const double> values);

  std::span<const double> atoms() const { return atoms_; }
  std::span<const double> masses() const { return masses_; }
  //! Empty unless the distribution was fitted to censored data.
  std::span<const AtomCounts> counts() const { return counts_; }
  bool has_counts() const { return !counts_.empty(); }
  std::size_t size() const { return atoms_.size(); }

  //! Right-continuous distribution function.
  double cdf(double t) const;
  //! Left limit G(t-).
  double cdf_left(double t) const;
  //! Reweight masses by x^{power} and renormalize (power = -1 gives the
  //! length-bias inversion, power = +1 its inverse).
  DiscreteDist reweighted(double power) const;

private:
  std::vector<double> atoms_;
  std::vector<double> masses_;
  std::vector<AtomCounts> counts_;
  std::vector<double> cumulative_;
};

//! Compact kernel on (-1, 1) with moments cached at construction.
class Kernel
{
public:
  using Fn = double (*)(double);

  Kernel(std::string name, Fn eval, Fn derivative);

  double operator()(double u) const
  {
    return (u > -1.0 && u < 1.0) ? eval_(u) : 0.0;
  }
  double derivative(double u) const
  {
    return (u > -1.0 && u < 1.0) ? derivative_(u) : 0.0;
  }

  const std::string& name() const { return name_; }
  //! \int K^2
  double nu2() const { return nu2_; }
  //! \int u^2 K(u) du
  double sigma2() const { return sigma2_; }
  double total_variation() const { return total_variation_; }
  double mass() const { return mass_; }
  double first_moment() const { return first_moment_; }

private:
  std::string name_;
  Fn eval_;
  Fn derivative_;
  double nu2_ = 0.0;
  double sigma2_ = 0.0;
  double total_variation_ = 0.0;
  double mass_ = 0.0;
  double first_moment_ = 0.0;
};

Kernel kernel_epanechnikov();
Kernel kernel_biweight();
Kernel kernel_by_name(const std::string& name);

//! f(y) = sum_{t_i >= y} w_i / t_i: the density of U Z when Z ~ dist.
double censored_density(const DiscreteDist& dist, double y);

//! Repeated evaluation of censored_density through suffix sums.
class CensoredDensity
{
public:
  explicit CensoredDensity(const DiscreteDist& dist);
  double operator()(double y) const;
  //! Value on (t_{i-1}, t_i], i.e. sum_{j >= i} w_j / t_j.
  double at_index(std::size_t i) const { return suffix_[i]; }
  std::span<const double> atoms() const { return atoms_; }

private:
  std::vector<double> atoms_;
  std::vector<double> suffix_;
};

//! Uniform draw on the open interval (0, 1).
double open_uniform(Rng& rng);

//! Neumaier-compensated sum.
double stable_sum(std::span<const double> values);

} // namespace mcens
