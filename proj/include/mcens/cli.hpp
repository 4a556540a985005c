#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcens/ise.hpp"
#include "mcens/npmle.hpp"

namespace mcens {

class UsageError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& subcommands()
{
  static const std::vector<std::string> names{ "simulate",   "fit",     "kde",         "experiment",
                                               "covariance", "are-demo", "figure-paths" };
  return names;
}

//! Flattened configuration for one invocation. Optional fields fall back to
//! per-subcommand defaults (see the effective_* accessors).
struct RunConfig
{
  std::string subcommand;
  std::uint64_t seed = 20120601;
  unsigned threads = 1;

  std::string input;
  std::string output;
  std::string summary_output;
  std::string config_file;

  // model / simulation
  double alpha = 5.0;
  double scale = 1.0;
  std::size_t m = 50;
  std::size_t n = 50;
  std::string mode = "mc";
  //! Mean of the exponential residual censoring time in lb mode; none = no censoring.
  std::optional<double> censor_mean;

  SolverConfig solver;

  // kde
  std::string kernel = "epanechnikov";
  std::string rule = "reference";
  std::optional<double> bandwidth;
  double grid_lo = 0.0;
  std::optional<double> grid_hi;
  std::size_t grid_n = 201;
  std::string target = "g";

  // experiment
  std::optional<std::vector<SampleSize>> sizes;
  std::optional<std::size_t> reps;
  double ise_quantile = 0.999;
  std::size_t ise_grid_n = 2049;
  std::size_t oracle_grid_n = 40;

  // covariance
  std::string method = "bootstrap";
  std::size_t bootstrap_reps = 200;
  std::optional<std::vector<double>> cov_grid;
  std::string cov_target = "u";
  std::size_t psi_grid_n = 100;
  bool uncensored_term = true;

  // are-demo / figure-paths
  double theta = 1.0;
  std::size_t paths = 100;

  std::vector<SampleSize> effective_sizes() const;
  std::size_t effective_reps() const;
};

//! args excludes the program name. Flags override config-file values, which
//! override defaults. Throws UsageError naming the offending flag or key.
RunConfig parse_config(const std::vector<std::string>& args);

//! "# key=value" lines for every setting that can influence results.
std::string effective_config(const RunConfig& cfg);

std::string usage_text();

//! Exit codes: 0 success, 1 usage, 2 numerical failure, 3 I/O.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

} // namespace mcens
