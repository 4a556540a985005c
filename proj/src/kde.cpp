#include "mcens/kde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mcens/ise.hpp"

namespace mcens {

KdeEstimate::KdeEstimate(DiscreteDist dist, Kernel kernel, double bandwidth)
  : dist_(std::move(dist))
  , kernel_(std::move(kernel))
  , bandwidth_(bandwidth)
{
  if (!(bandwidth_ > 0.0) || !std::isfinite(bandwidth_))
    throw std::invalid_argument("KdeEstimate: bandwidth must be positive and finite");
  const auto atoms = dist_.atoms();
  const auto masses = dist_.masses();
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (masses[i] > 0.0) {
      support_.push_back(atoms[i]);
      weights_.push_back(masses[i]);
    }
  }
}

double KdeEstimate::operator()(double t) const
{
  const double h = bandwidth_;
  auto i = static_cast<std::size_t>(
    std::upper_bound(support_.begin(), support_.end(), t - h) - support_.begin());
  double sum = 0.0;
  for (; i < support_.size() && support_[i] < t + h; ++i)
    sum += weights_[i] * kernel_((t - support_[i]) / h);
  return sum / h;
}

double kde_eval(const KdeEstimate& est, double t)
{
  return est(t);
}

std::string to_string(BandwidthRule rule)
{
  switch (rule) {
    case BandwidthRule::reference:
      return "reference";
    case BandwidthRule::theoretical:
      return "theoretical";
    case BandwidthRule::oracle:
      return "oracle";
  }
  return "unknown";
}

BandwidthRule parse_bandwidth_rule(const std::string& text)
{
  if (text == "reference")
    return BandwidthRule::reference;
  if (text == "theoretical")
    return BandwidthRule::theoretical;
  if (text == "oracle" || text == "optimal")
    return BandwidthRule::oracle;
  throw std::invalid_argument("unknown bandwidth rule '" + text + "'");
}

double bandwidth_reference(std::span<const double> uncensored, const Kernel& kernel)
{
  if (uncensored.empty())
    throw std::invalid_argument("reference bandwidth needs at least one uncensored value");
  const double m = static_cast<double>(uncensored.size());
  double total = 0.0;
  for (const double v : uncensored)
    total += v;
  const double beta_hat = total / (4.0 * m);
  const double s2 = kernel.sigma2();
  return 2.0 * beta_hat * std::pow(kernel.nu2() / (m * s2 * s2), 0.2);
}

double bandwidth_reference(const MCSample& sample, const Kernel& kernel)
{
  return bandwidth_reference(sample.x, kernel);
}

double bandwidth_theoretical(std::size_t k, double p, const Kernel& kernel, double l2_gpp)
{
  if (k == 0 || !(p > 0.0) || p > 1.0 || !(l2_gpp > 0.0) || !std::isfinite(l2_gpp))
    throw std::invalid_argument("theoretical bandwidth needs k > 0, p in (0, 1], finite l2 > 0");
  const double s2 = kernel.sigma2();
  return std::pow(kernel.nu2() / (static_cast<double>(k) * p * s2 * s2 * l2_gpp), 0.2);
}

std::vector<double> BandwidthGrid::values() const
{
  if (count == 0 || !(lo > 0.0) || !(hi >= lo))
    return {};
  if (count == 1)
    return { lo };
  std::vector<double> out(count);
  const double step = std::log(hi / lo) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = lo * std::exp(step * static_cast<double>(i));
  out.back() = hi;
  return out;
}

BandwidthGrid BandwidthGrid::around(double h)
{
  return BandwidthGrid{ h / 8.0, h * 8.0, 40 };
}

double bandwidth_oracle(const DiscreteDist& dist,
                        const TrueModel& model,
                        const Kernel& kernel,
                        double a,
                        double b,
                        std::span<const double> candidates,
                        std::size_t quad_points)
{
  if (!(b > a) || a < 0.0)
    throw std::invalid_argument("bandwidth_oracle: need b > a >= 0");
  if (candidates.empty())
    throw std::invalid_argument("bandwidth_oracle: empty bandwidth grid");
  double best_h = candidates.front();
  double best = std::numeric_limits<double>::infinity();
  for (const double h : candidates) {
    const double value = ise(KdeEstimate(dist, kernel, h), model, a, b, quad_points);
    if (value < best) {
      best = value;
      best_h = h;
    }
  }
  return best_h;
}

} // namespace mcens
