#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mcens/dist.hpp"
#include "mcens/kde.hpp"
#include "mcens/npmle.hpp"
#include "mcens/simulate.hpp"

namespace mcens {

//! Estimate of the unbiased law F_U obtained from a fitted G by the
//! inverse length-bias reweighting w_i / t_i.
struct UnbiasedEstimate
{
  DiscreteDist dist;
  //! \int z^{-1} dG_hat(z), the normaliser of the reweighting (1 / mu_U).
  double mu_u_hat = 0.0;
  DiscreteDist fu;
};

UnbiasedEstimate unbiased_cdf(const DiscreteDist& dist);

KdeEstimate kde_unbiased(const UnbiasedEstimate& ue, const Kernel& kernel, double h);

//! Symmetric matrix of covariance values on an increasing grid, row-major.
class CovGrid
{
public:
  CovGrid() = default;
  CovGrid(std::vector<double> grid, std::vector<double> values);

  std::span<const double> grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return grid_.size(); }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * grid_.size() + j]; }
  double& at(std::size_t i, std::size_t j) { return values_[i * grid_.size() + j]; }
  //! Bilinear interpolation; throws if (s, t) lies outside the grid square.
  double interpolate(double s, double t) const;

  //! Diagnostics attached by the producing estimator.
  std::vector<std::string> warnings;

private:
  std::vector<double> grid_;
  std::vector<double> values_;
};

struct ExplicitCovOptions
{
  //! Include the p {int beta^2 dG* - ...} term, with beta taken as zeta.
  bool include_uncensored_term = true;
  //! Uniform integration cells laid between the smallest positive atom and
  //! the largest grid point (grid points are always cell boundaries).
  std::size_t integration_cells = 800;
  std::string kernel = "epanechnikov";
};

//! Plug-in evaluation of the closed-form covariance of sqrt(k)(G_hat - G)
//! under length-biased right-censored sampling. Only totals enter, so the
//! MCSample overload is equivalent to passing lb_to_mc(lb).
CovGrid psi_u_explicit(const MCSample& totals,
                       const DiscreteDist& dist,
                       std::span<const double> grid,
                       const ExplicitCovOptions& options = {});
CovGrid psi_u_explicit(const LbSample& lb,
                       const DiscreteDist& dist,
                       std::span<const double> grid,
                       const ExplicitCovOptions& options = {});

struct BootstrapOptions
{
  SolverConfig solver;
  unsigned threads = 1;
};

struct BootstrapResult
{
  CovGrid cov;
  std::size_t failures = 0;
};

//! Nonparametric bootstrap of sqrt(k) G_hat(grid): uncensored and censored
//! values are resampled separately (fixed m, n) and refitted.
BootstrapResult psi_u_bootstrap(const MCSample& sample,
                                std::size_t resamples,
                                std::span<const double> grid,
                                std::uint64_t seed,
                                const BootstrapOptions& options = {});
BootstrapResult psi_u_bootstrap(const LbSample& sample,
                                std::size_t resamples,
                                std::span<const double> grid,
                                std::uint64_t seed,
                                const BootstrapOptions& options = {});

//! mu^{-2} double Stieltjes sum of psi_U against dL_s, dL_t where
//! L_u(z) = z^{-1} [1{z <= u} - F_U_hat(u)]. Every point of `grid` must be a
//! point of psi_u's grid.
CovGrid psi_z_hat(const CovGrid& psi_u, const UnbiasedEstimate& ue, std::span<const double> grid);

//! h^{-1} \iint psi(s - u h, t - v h) K'(u) K'(v) du dv.
double sigma_hat(const CovGrid& psi, const Kernel& kernel, double h, double s, double t);

//! Grid errors from psi_z_hat / sigma_hat.
class GridMismatch : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

} // namespace mcens
