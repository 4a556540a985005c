#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mcens/dist.hpp"
#include "mcens/simulate.hpp"

namespace mcens {

struct SolverConfig
{
  //! Exponent in the default truncation point gamma = k^{-1/(2 alpha_trunc)}.
  double alpha_trunc = 2.0;
  //! Explicit truncation point; declares G(gamma) = 0.
  std::optional<double> gamma_override;
  //! Sup-norm change between iterates at which the iteration stops.
  double tol = 1e-10;
  std::size_t max_iter = 100'000;
  //! Weight d in a <- (1 - d) a + d phi(a).
  double damping = 1.0;
};

void validate(const SolverConfig& cfg);

struct SolveReport
{
  std::size_t iterations = 0;
  double final_delta = 0.0;
  //! max_i |w_i - phi_i(w)| over the atoms at or above gamma.
  double residual = 0.0;
  //! First pooled atom index with t_i >= gamma (0-based).
  std::size_t r0_index = 0;
  double gamma = 0.0;
  bool damping_triggered = false;
  //! Atoms at or above the truncation point that end with exactly zero mass.
  std::size_t pruned = 0;
};

//! Observations pooled into distinct ordered atoms with multiplicities.
struct PooledAtoms
{
  std::vector<double> atoms;
  std::vector<AtomCounts> counts;
  std::size_t m = 0;
  std::size_t n = 0;

  std::size_t k() const { return m + n; }
};

PooledAtoms pool(const MCSample& sample);

//! Truncation point used for a sample of size k under `cfg`, before the
//! adjustment for uncensored values lying below it.
double truncation_point(std::size_t k, const SolverConfig& cfg);

struct Fit
{
  DiscreteDist dist;
  SolveReport report;
};

class NonConvergence : public std::runtime_error
{
public:
  NonConvergence(Fit partial);
  const Fit& partial() const { return partial_; }

private:
  Fit partial_;
};

class DegenerateTruncation : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

//! Applies the self-consistency map phi to masses `active` on atoms
//! r0, ..., q-1 of `pooled` (active.size() == q - r0):
//!   phi_i(a) = (1/k) [u_i + (a_i / t_i) sum_{j <= i} c_j / sum_{l >= max(j, r0)} a_l / t_l].
//! Returns phi without renormalization.
std::vector<double> apply_phi(const PooledAtoms& pooled,
                              std::size_t r0,
                              std::span<const double> active);

//! Solves the nonparametric score equation by damped fixed-point iteration
//! of phi, with zero mass below the truncation point.
Fit solve_score(const MCSample& sample, const SolverConfig& cfg = {});

//! max over atoms i >= r0 of |w_i - phi_i(w)|; `dist` must live on the pooled
//! atoms of `sample`.
double score_residual(const DiscreteDist& dist, const MCSample& sample, double gamma);

//! sup |G_hat(t) - G(t)| over the atoms of `dist` and `grid_n` uniform points
//! on [0, max(largest atom, model upper support)], G_hat right-continuous.
double sup_distance(const DiscreteDist& dist, const TrueModel& model, std::size_t grid_n);

} // namespace mcens
