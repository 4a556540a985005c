#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <variant>

#include "mcens/dist.hpp"
#include "mcens/simulate.hpp"

namespace mcens {

class CsvError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

//! Shortest text that round-trips the double.
std::string format_double(double v);

//! value,censored
void write_mc_csv(std::ostream& out, const MCSample& sample);
//! onset_age,followup,delta
void write_lb_csv(std::ostream& out, const LbSample& sample);
//! atom,mass,uncensored_count,censored_count
void write_fit_csv(std::ostream& out, const DiscreteDist& dist);

using SampleFile = std::variant<MCSample, LbSample>;

//! Reads either sample layout; the header row decides which. Lines starting
//! with '#' and blank lines are skipped.
SampleFile read_sample_csv(std::istream& in);
//! Totals view of either layout.
MCSample as_mc(const SampleFile& file);

DiscreteDist read_fit_csv(std::istream& in);

} // namespace mcens
