#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mcens/dist.hpp"

namespace mcens {

//! Observed pair: uncensored draws x from G and multiplicatively censored
//! draws y = z u, z ~ G, u ~ Uniform(0, 1).
struct MCSample
{
  std::vector<double> x;
  std::vector<double> y;

  std::size_t m() const { return x.size(); }
  std::size_t n() const { return y.size(); }
  std::size_t k() const { return x.size() + y.size(); }
  //! m / k; 0 for an empty sample.
  double phat() const;
};

//! Throws std::invalid_argument unless the sample is nonempty with positive,
//! finite entries.
void validate(const MCSample& sample);

//! One prevalent-cohort subject: current age, min(residual, censoring), and
//! whether the failure was observed.
struct LbRecord
{
  double onset_age = 0.0;
  double followup = 0.0;
  bool delta = false;

  double total() const { return onset_age + followup; }
};

struct LbSample
{
  std::vector<LbRecord> records;
  //! Raw draws consumed to fill the (m, n) quotas.
  std::size_t draws = 0;
};

MCSample gen_mc(const TrueModel& model, std::size_t m, std::size_t n, std::uint64_t seed);

//! Length-biased right-censored sampling from a stationary prevalent cohort,
//! conditional on exactly `target_m` uncensored and `target_n` censored
//! subjects. `censor` is the residual censoring law F_D; use
//! TrueModel::point_mass(inf) for no censoring.
LbSample gen_lb(const TrueModel& fu_model,
                const TrueModel& censor,
                std::size_t target_m,
                std::size_t target_n,
                std::uint64_t seed);

//! Uncensored totals a + r become x, censored totals a + d become y.
MCSample lb_to_mc(const LbSample& sample);

inline constexpr std::size_t kLbMaxDraws = 10'000'000;

} // namespace mcens
