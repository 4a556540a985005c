#include "mcens/csv.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <vector>

#include <fmt/format.h>

namespace mcens {

namespace {

std::vector<std::string> split_row(const std::string& line)
{
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    std::string cell = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' '))
      cell.pop_back();
    while (!cell.empty() && cell.front() == ' ')
      cell.erase(cell.begin());
    cells.push_back(std::move(cell));
    if (comma == std::string::npos)
      return cells;
    start = comma + 1;
  }
}

double parse_number(const std::string& cell, std::size_t line_no)
{
  double v = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (!cell.empty() && *first == '+')
    ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw CsvError(fmt::format("line {}: '{}' is not a number", line_no, cell));
  return v;
}

bool parse_flag(const std::string& cell, std::size_t line_no)
{
  if (cell == "0")
    return false;
  if (cell == "1")
    return true;
  throw CsvError(fmt::format("line {}: expected 0 or 1, got '{}'", line_no, cell));
}

// Next data row, skipping comments and blank lines.
bool next_row(std::istream& in, std::vector<std::string>& cells, std::size_t& line_no)
{
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line.front() == '#')
      continue;
    cells = split_row(line);
    return true;
  }
  return false;
}

void expect_width(const std::vector<std::string>& cells, std::size_t width, std::size_t line_no)
{
  if (cells.size() != width)
    throw CsvError(fmt::format("line {}: expected {} columns, found {}", line_no, width, cells.size()));
}

} // namespace

std::string format_double(double v)
{
  return fmt::format("{}", v);
}

void write_mc_csv(std::ostream& out, const MCSample& sample)
{
  out << "value,censored\n";
  for (const double v : sample.x)
    out << format_double(v) << ",0\n";
  for (const double v : sample.y)
    out << format_double(v) << ",1\n";
}

void write_lb_csv(std::ostream& out, const LbSample& sample)
{
  out << "onset_age,followup,delta\n";
  for (const auto& r : sample.records)
    out << format_double(r.onset_age) << ',' << format_double(r.followup) << ','
        << (r.delta ? 1 : 0) << '\n';
}

void write_fit_csv(std::ostream& out, const DiscreteDist& dist)
{
  out << "atom,mass,uncensored_count,censored_count\n";
  const auto atoms = dist.atoms();
  const auto masses = dist.masses();
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    std::size_t u = 0;
    std::size_t c = 0;
    if (dist.has_counts()) {
      u = dist.counts()[i].uncensored;
      c = dist.counts()[i].censored;
    }
    out << format_double(atoms[i]) << ',' << format_double(masses[i]) << ',' << u << ',' << c
        << '\n';
  }
}

SampleFile read_sample_csv(std::istream& in)
{
  std::vector<std::string> cells;
  std::size_t line_no = 0;
  if (!next_row(in, cells, line_no))
    throw CsvError("sample file has no header row");

  if (cells == std::vector<std::string>{ "value", "censored" }) {
    MCSample s;
    while (next_row(in, cells, line_no)) {
      expect_width(cells, 2, line_no);
      const double v = parse_number(cells[0], line_no);
      (parse_flag(cells[1], line_no) ? s.y : s.x).push_back(v);
    }
    return s;
  }
  if (cells == std::vector<std::string>{ "onset_age", "followup", "delta" }) {
    LbSample s;
    while (next_row(in, cells, line_no)) {
      expect_width(cells, 3, line_no);
      s.records.push_back(LbRecord{ parse_number(cells[0], line_no),
                                    parse_number(cells[1], line_no),
                                    parse_flag(cells[2], line_no) });
    }
    s.draws = s.records.size();
    return s;
  }
  throw CsvError(fmt::format("line {}: unrecognised header; expected 'value,censored' or "
                             "'onset_age,followup,delta'",
                             line_no));
}

MCSample as_mc(const SampleFile& file)
{
  if (const auto* mc = std::get_if<MCSample>(&file))
    return *mc;
  return lb_to_mc(std::get<LbSample>(file));
}

DiscreteDist read_fit_csv(std::istream& in)
{
  std::vector<std::string> cells;
  std::size_t line_no = 0;
  if (!next_row(in, cells, line_no) ||
      cells != std::vector<std::string>{ "atom", "mass", "uncensored_count", "censored_count" })
    throw CsvError("fit file must start with 'atom,mass,uncensored_count,censored_count'");
  std::vector<double> atoms;
  std::vector<double> masses;
  std::vector<AtomCounts> counts;
  while (next_row(in, cells, line_no)) {
    expect_width(cells, 4, line_no);
    atoms.push_back(parse_number(cells[0], line_no));
    masses.push_back(parse_number(cells[1], line_no));
    counts.push_back(AtomCounts{ static_cast<std::size_t>(parse_number(cells[2], line_no)),
                                 static_cast<std::size_t>(parse_number(cells[3], line_no)) });
  }
  try {
    return DiscreteDist(std::move(atoms), std::move(masses), std::move(counts));
  } catch (const std::invalid_argument& e) {
    throw CsvError(std::string("fit file: ") + e.what());
  }
}

} // namespace mcens
