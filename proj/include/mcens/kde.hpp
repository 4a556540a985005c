#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mcens/dist.hpp"
#include "mcens/simulate.hpp"

namespace mcens {

//! Kernel estimate g(t) = h^{-1} sum_i w_i K((t - t_i) / h) over a
//! discrete distribution.
class KdeEstimate
{
public:
  KdeEstimate(DiscreteDist dist, Kernel kernel, double bandwidth);

  double operator()(double t) const;

  const DiscreteDist& dist() const { return dist_; }
  const Kernel& kernel() const { return kernel_; }
  double bandwidth() const { return bandwidth_; }

private:
  DiscreteDist dist_;
  Kernel kernel_;
  double bandwidth_;
  // Atoms carrying positive mass, for evaluation.
  std::vector<double> support_;
  std::vector<double> weights_;
};

double kde_eval(const KdeEstimate& est, double t);

enum class BandwidthRule
{
  reference,
  theoretical,
  oracle
};

std::string to_string(BandwidthRule rule);
BandwidthRule parse_bandwidth_rule(const std::string& text);

//! Gamma(4, beta) reference rule 2 beta_hat (nu^2 / (m sigma^4))^{1/5} with
//! beta_hat = mean(x) / 4 computed from the uncensored values.
double bandwidth_reference(std::span<const double> uncensored, const Kernel& kernel);
double bandwidth_reference(const MCSample& sample, const Kernel& kernel);

//! (nu^2 / (k p sigma^4 ||g''||^2))^{1/5}.
double bandwidth_theoretical(std::size_t k, double p, const Kernel& kernel, double l2_gpp);

//! Log-spaced candidate bandwidths.
struct BandwidthGrid
{
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 40;

  std::vector<double> values() const;
  //! [h / 8, 8 h] with 40 points.
  static BandwidthGrid around(double h);
};

//! ISE-minimizing bandwidth over `candidates` against the true density on
//! [a, b]. Ties go to the earliest candidate.
double bandwidth_oracle(const DiscreteDist& dist,
                        const TrueModel& model,
                        const Kernel& kernel,
                        double a,
                        double b,
                        std::span<const double> candidates,
                        std::size_t quad_points = 2049);

} // namespace mcens
