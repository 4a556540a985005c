#include "mcens/dist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <boost/math/special_functions/gamma.hpp>

#include "mcens/quadrature.hpp"

namespace mcens {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMassTolerance = 1e-12;
// Panels for cached kernel moments.
constexpr std::size_t kKernelPanels = 2048;

template <class... Ts>
struct Overloaded : Ts...
{
  using Ts::operator()...;
};

double log_gamma_norm(const GammaParams& s)
{
  return std::lgamma(s.shape) + s.shape * std::log(s.scale);
}

} // namespace

void validate(const GammaParams& params)
{
  if (!(params.shape > 0.0) || !std::isfinite(params.shape))
    throw std::invalid_argument("gamma shape must be positive and finite");
  if (!(params.scale > 0.0) || !std::isfinite(params.scale))
    throw std::invalid_argument("gamma scale must be positive and finite");
}

double gamma_pdf(const GammaParams& params, double x)
{
  if (x < 0.0)
    return 0.0;
  if (x == 0.0) {
    if (params.shape < 1.0)
      return kInf;
    return params.shape == 1.0 ? 1.0 / params.scale : 0.0;
  }
  return std::exp((params.shape - 1.0) * std::log(x) - x / params.scale - log_gamma_norm(params));
}

double gamma_cdf(const GammaParams& params, double x)
{
  if (x <= 0.0)
    return 0.0;
  if (std::isinf(x))
    return 1.0;
  return boost::math::gamma_p(params.shape, x / params.scale);
}

double gamma_quantile(const GammaParams& params, double prob)
{
  if (prob < 0.0 || prob > 1.0)
    throw std::invalid_argument("gamma_quantile: probability outside [0, 1]");
  if (prob == 0.0)
    return 0.0;
  if (prob == 1.0)
    return kInf;
  return params.scale * boost::math::gamma_p_inv(params.shape, prob);
}

// g(x) = C e^{-x/b} x^{a-1}, so
// g''(x) = C e^{-x/b} [(a-1)(a-2) x^{a-3} - 2(a-1)/b x^{a-2} + x^{a-1}/b^2].
double gamma_second_deriv(const GammaParams& params, double x)
{
  if (x < 0.0)
    return 0.0;
  const double a = params.shape;
  const double b = params.scale;
  const double coef[3] = { (a - 1.0) * (a - 2.0), -2.0 * (a - 1.0) / b, 1.0 / (b * b) };
  const double power[3] = { a - 3.0, a - 2.0, a - 1.0 };
  const double scale = std::exp(-x / b - log_gamma_norm(params));
  double sum = 0.0;
  for (int j = 0; j < 3; ++j) {
    if (coef[j] == 0.0)
      continue;
    sum += coef[j] * std::pow(x, power[j]);
  }
  return scale * sum;
}

double gamma_l2_second_deriv(const GammaParams& params, double upper)
{
  validate(params);
  if (!(upper > 0.0))
    return 0.0;
  const double a = params.shape;
  const double b = params.scale;
  const double coef[3] = { (a - 1.0) * (a - 2.0), -2.0 * (a - 1.0) / b, 1.0 / (b * b) };
  const double offset[3] = { -2.0, -1.0, 0.0 };
  const double rate = 2.0 / b;
  const double log_c2 = -2.0 * log_gamma_norm(params);

  double total = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double c = coef[i] * coef[j];
      if (c == 0.0)
        continue;
      // \int_0^U x^p e^{-rate x} dx = rate^{-(p+1)} gamma_lower(p+1, rate U)
      const double p = 2.0 * a - 2.0 + offset[i] + offset[j];
      if (p <= -1.0)
        return kInf;
      const double lower = std::isinf(upper)
                             ? boost::math::tgamma(p + 1.0)
                             : boost::math::tgamma_lower(p + 1.0, rate * upper);
      total += c * std::exp(log_c2 - (p + 1.0) * std::log(rate)) * lower;
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// TrueModel

TrueModel::TrueModel(Family family)
  : family_(std::move(family))
{
  l2_gpp_ = std::visit(
    Overloaded{ [&](const GammaParams& g) { return gamma_l2_second_deriv(g, effective_upper()); },
                [](const PointMass&) { return std::numeric_limits<double>::quiet_NaN(); } },
    family_);
}

TrueModel TrueModel::gamma(double shape, double scale)
{
  GammaParams params{ shape, scale };
  validate(params);
  return TrueModel(params);
}

TrueModel TrueModel::point_mass(double location)
{
  if (!(location > 0.0))
    throw std::invalid_argument("point mass location must be positive");
  return TrueModel(PointMass{ location });
}

double TrueModel::pdf(double x) const
{
  return std::visit(Overloaded{ [&](const GammaParams& g) { return gamma_pdf(g, x); },
                                [](const PointMass&) { return 0.0; } },
                    family_);
}

double TrueModel::cdf(double x) const
{
  return std::visit(Overloaded{ [&](const GammaParams& g) { return gamma_cdf(g, x); },
                                [&](const PointMass& p) { return x >= p.location ? 1.0 : 0.0; } },
                    family_);
}

double TrueModel::quantile(double prob) const
{
  return std::visit(Overloaded{ [&](const GammaParams& g) { return gamma_quantile(g, prob); },
                                [&](const PointMass& p) { return prob > 0.0 ? p.location : 0.0; } },
                    family_);
}

double TrueModel::second_deriv(double x) const
{
  return std::visit(Overloaded{ [&](const GammaParams& g) { return gamma_second_deriv(g, x); },
                                [](const PointMass&) { return 0.0; } },
                    family_);
}

double TrueModel::sample(Rng& rng) const
{
  return std::visit(Overloaded{ [&](const GammaParams& g) {
                                 std::gamma_distribution<double> draw(g.shape, g.scale);
                                 return draw(rng);
                               },
                                [](const PointMass& p) { return p.location; } },
                    family_);
}

double TrueModel::mean() const
{
  return std::visit(Overloaded{ [](const GammaParams& g) { return g.shape * g.scale; },
                                [](const PointMass& p) { return p.location; } },
                    family_);
}

double TrueModel::tau() const
{
  return std::visit(Overloaded{ [](const GammaParams&) { return kInf; },
                                [](const PointMass& p) { return p.location; } },
                    family_);
}

double TrueModel::effective_upper() const
{
  const double t = tau();
  return std::isfinite(t) ? t : quantile(0.9999);
}

double TrueModel::l2_gpp(double upper) const
{
  return std::visit(
    Overloaded{ [&](const GammaParams& g) { return gamma_l2_second_deriv(g, upper); },
                [](const PointMass&) { return std::numeric_limits<double>::quiet_NaN(); } },
    family_);
}

bool TrueModel::has_density() const
{
  return std::holds_alternative<GammaParams>(family_);
}

TrueModel TrueModel::length_biased() const
{
  return std::visit(Overloaded{ [](const GammaParams& g) { return gamma(g.shape + 1.0, g.scale); },
                                [](const PointMass& p) {
                                  if (std::isinf(p.location))
                                    throw std::invalid_argument(
                                      "length bias undefined for an infinite point mass");
                                  return point_mass(p.location);
                                } },
                    family_);
}

std::string TrueModel::describe() const
{
  std::ostringstream os;
  std::visit(Overloaded{ [&](const GammaParams& g) {
                          os << "gamma(shape=" << g.shape << ", scale=" << g.scale << ")";
                        },
                         [&](const PointMass& p) { os << "point_mass(" << p.location << ")"; } },
             family_);
  return os.str();
}

// ---------------------------------------------------------------------------
// DiscreteDist

DiscreteDist::DiscreteDist(std::vector<double> atoms, std::vector<double> masses)
  : DiscreteDist(std::move(atoms), std::move(masses), {})
{
}

DiscreteDist::DiscreteDist(std::vector<double> atoms,
                           std::vector<double> masses,
                           std::vector<AtomCounts> counts)
  : atoms_(std::move(atoms))
  , masses_(std::move(masses))
  , counts_(std::move(counts))
{
  if (atoms_.empty())
    throw std::invalid_argument("DiscreteDist: no atoms");
  if (atoms_.size() != masses_.size())
    throw std::invalid_argument("DiscreteDist: atoms and masses differ in length");
  if (!counts_.empty() && counts_.size() != atoms_.size())
    throw std::invalid_argument("DiscreteDist: counts and atoms differ in length");
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    if (!(atoms_[i] > 0.0) || !std::isfinite(atoms_[i]))
      throw std::invalid_argument("DiscreteDist: atoms must be positive and finite");
    if (i > 0 && !(atoms_[i] > atoms_[i - 1]))
      throw std::invalid_argument("DiscreteDist: atoms must be strictly increasing");
    if (!(masses_[i] >= 0.0) || !std::isfinite(masses_[i]))
      throw std::invalid_argument("DiscreteDist: masses must be nonnegative");
  }
  if (std::abs(stable_sum(masses_) - 1.0) > kMassTolerance)
    throw std::invalid_argument("DiscreteDist: masses do not sum to one");

  cumulative_.resize(masses_.size());
  double sum = 0.0;
  double carry = 0.0;
  for (std::size_t i = 0; i < masses_.size(); ++i) {
    const double t = sum + masses_[i];
    carry += std::abs(sum) >= std::abs(masses_[i]) ? (sum - t) + masses_[i]
                                                   : (masses_[i] - t) + sum;
    sum = t;
    cumulative_[i] = std::clamp(sum + carry, 0.0, 1.0);
  }
  cumulative_.back() = 1.0;
}

DiscreteDist DiscreteDist::point_mass(double location)
{
  return DiscreteDist({ location }, { 1.0 });
}

DiscreteDist DiscreteDist::empirical(std::span<const double> values)
{
  if (values.empty())
    throw std::invalid_argument("DiscreteDist::empirical: no values");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> atoms;
  std::vector<double> masses;
  const double total = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i])
      ++j;
    atoms.push_back(sorted[i]);
    masses.push_back(static_cast<double>(j - i) / total);
    i = j;
  }
  return DiscreteDist(std::move(atoms), std::move(masses));
}

double DiscreteDist::cdf(double t) const
{
  const auto it = std::upper_bound(atoms_.begin(), atoms_.end(), t);
  const auto idx = static_cast<std::size_t>(it - atoms_.begin());
  return idx == 0 ? 0.0 : cumulative_[idx - 1];
}

double DiscreteDist::cdf_left(double t) const
{
  const auto it = std::lower_bound(atoms_.begin(), atoms_.end(), t);
  const auto idx = static_cast<std::size_t>(it - atoms_.begin());
  return idx == 0 ? 0.0 : cumulative_[idx - 1];
}

DiscreteDist DiscreteDist::reweighted(double power) const
{
  std::vector<double> w(masses_.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = masses_[i] * std::pow(atoms_[i], power);
  const double total = stable_sum(w);
  for (double& v : w)
    v /= total;
  return DiscreteDist(atoms_, std::move(w), counts_);
}

// ---------------------------------------------------------------------------
// Kernels

Kernel::Kernel(std::string name, Fn eval, Fn derivative)
  : name_(std::move(name))
  , eval_(eval)
  , derivative_(derivative)
{
  const auto& k = *this;
  mass_ = simpson([&](double u) { return k(u); }, -1.0, 1.0, kKernelPanels);
  first_moment_ = simpson([&](double u) { return u * k(u); }, -1.0, 1.0, kKernelPanels);
  nu2_ = simpson([&](double u) { return k(u) * k(u); }, -1.0, 1.0, kKernelPanels);
  sigma2_ = simpson([&](double u) { return u * u * k(u); }, -1.0, 1.0, kKernelPanels);
  // Sum of absolute increments on the closed interval, so jumps at the
  // support ends count as well.
  total_variation_ = 0.0;
  double prev = 0.0;
  for (std::size_t i = 0; i <= kKernelPanels; ++i) {
    const double u = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(kKernelPanels);
    const double v = (i == 0 || i == kKernelPanels) ? eval_(u) : k(u);
    total_variation_ += std::abs(v - prev);
    prev = v;
  }
  total_variation_ += std::abs(prev);
  if (std::abs(mass_ - 1.0) > 1e-10 || std::abs(first_moment_) > 1e-10)
    throw std::invalid_argument("kernel '" + name_ + "' is not a centred density");
}

Kernel kernel_epanechnikov()
{
  return Kernel(
    "epanechnikov",
    [](double u) { return 0.75 * (1.0 - u * u); },
    [](double u) { return -1.5 * u; });
}

Kernel kernel_biweight()
{
  return Kernel(
    "biweight",
    [](double u) {
      const double v = 1.0 - u * u;
      return 0.9375 * v * v;
    },
    [](double u) { return -3.75 * u * (1.0 - u * u); });
}

Kernel kernel_by_name(const std::string& name)
{
  if (name == "epanechnikov")
    return kernel_epanechnikov();
  if (name == "biweight")
    return kernel_biweight();
  throw std::invalid_argument("unknown kernel '" + name + "'");
}

// ---------------------------------------------------------------------------

double censored_density(const DiscreteDist& dist, double y)
{
  const auto atoms = dist.atoms();
  const auto masses = dist.masses();
  double sum = 0.0;
  for (std::size_t i = atoms.size(); i-- > 0 && atoms[i] >= y;)
    sum += masses[i] / atoms[i];
  return sum;
}

CensoredDensity::CensoredDensity(const DiscreteDist& dist)
  : atoms_(dist.atoms().begin(), dist.atoms().end())
  , suffix_(atoms_.size() + 1, 0.0)
{
  const auto masses = dist.masses();
  for (std::size_t i = atoms_.size(); i-- > 0;)
    suffix_[i] = suffix_[i + 1] + masses[i] / atoms_[i];
}

double CensoredDensity::operator()(double y) const
{
  const auto it = std::lower_bound(atoms_.begin(), atoms_.end(), y);
  return suffix_[static_cast<std::size_t>(it - atoms_.begin())];
}

double open_uniform(Rng& rng)
{
  // 53 random bits, centred in their cell: never 0, never 1.
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

double stable_sum(std::span<const double> values)
{
  double sum = 0.0;
  double carry = 0.0;
  for (const double v : values) {
    const double t = sum + v;
    carry += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  return sum + carry;
}

} // namespace mcens
