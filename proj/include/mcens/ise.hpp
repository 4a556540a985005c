#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mcens/dist.hpp"
#include "mcens/kde.hpp"
#include "mcens/npmle.hpp"

namespace mcens {

//! Simpson nodes on [a, b] with the true density tabulated once, so that
//! many estimates can be scored against the same truth.
class IseWindow
{
public:
  IseWindow(const TrueModel& model, double a, double b, std::size_t grid_n);

  //! \int_a^b (estimate - g)^2 by composite Simpson on the stored nodes.
  double operator()(const std::function<double(double)>& estimate) const;
  double operator()(const KdeEstimate& est) const;

  double a() const { return a_; }
  double b() const { return b_; }
  std::span<const double> nodes() const { return nodes_; }
  std::span<const double> truth() const { return truth_; }

private:
  double a_;
  double b_;
  std::vector<double> nodes_;
  std::vector<double> truth_;
  std::vector<double> weights_;
};

//! Integrated squared error of `est` against the model density on [a, b];
//! grid_n is the (odd, >= 3) number of Simpson nodes.
double ise(const KdeEstimate& est, const TrueModel& model, double a, double b, std::size_t grid_n);

struct Summary
{
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

//! Mean with normal-approximation 95% interval mean +- 1.96 sd / sqrt(n),
//! where sd uses divisor n.
Summary summarize(std::span<const double> values);

struct SampleSize
{
  std::size_t m = 0;
  std::size_t n = 0;

  std::string label() const;
  //! Parses "m+n".
  static SampleSize parse(const std::string& text);
};

struct ExperimentConfig
{
  double alpha = 5.0;
  std::vector<SampleSize> sizes;
  std::size_t reps = 500;
  BandwidthRule rule = BandwidthRule::reference;
  std::uint64_t seed = 20120601;
  //! ISE window is [0, quantile(ise_quantile)] of the true density.
  double ise_quantile = 0.999;
  std::size_t grid_n = 2049;
  std::size_t oracle_grid_n = 40;
  SolverConfig solver;
  std::string kernel = "epanechnikov";
  unsigned threads = 1;
};

struct ReplicationIse
{
  double ise_uncensored = 0.0;
  double ise_full = 0.0;
  bool failed = false;
};

struct ExperimentResult
{
  SampleSize size;
  double alpha = 0.0;
  //! Percent: mean of 100 (ISE_0 - ISE_1) / ISE_1 over successful replications.
  double mean_rel_increase = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t reps_used = 0;
  std::size_t reps_failed = 0;
  std::vector<ReplicationIse> pairs;
};

//! One replication's (ISE_0, ISE_1) for a given sample: ISE_0 uses the
//! uncensored empirical law, ISE_1 the score-equation fit on all data.
ReplicationIse relative_ise_replication(const MCSample& sample,
                                        const TrueModel& model,
                                        const IseWindow& window,
                                        const ExperimentConfig& config,
                                        const Kernel& kernel);

ExperimentResult run_relative_ise(const ExperimentConfig& config, std::size_t size_index);
std::vector<ExperimentResult> run_relative_ise(const ExperimentConfig& config);

//! h^4 sigma^4 / 4 ||g''||^2 + nu^2 / (h k p).
double predicted_ise(double h, std::size_t k, double p, const Kernel& kernel, double l2_gpp);

struct IseExpansion
{
  double empirical_mean_ise = 0.0;
  double predicted = 0.0;
  double bandwidth = 0.0;
  double l2_gpp = 0.0;
  double upper = 0.0;
  std::size_t reps_failed = 0;
};

//! Compares the Monte Carlo mean ISE on [0, quantile(eta_q)] at the
//! theoretical bandwidth with the leading-order expansion.
IseExpansion ise_expansion_check(const TrueModel& model,
                                 std::size_t k,
                                 double p,
                                 const Kernel& kernel,
                                 double eta_q,
                                 std::size_t reps,
                                 std::uint64_t seed,
                                 unsigned threads = 1,
                                 const SolverConfig& solver = {});

//! Var(theta_unc) / Var(theta_full) for X ~ Gamma(2, theta), Y ~ Exp(theta).
double are_demo(double theta,
                std::size_t m,
                std::size_t n,
                std::size_t reps,
                std::uint64_t seed,
                unsigned threads = 1);

} // namespace mcens
