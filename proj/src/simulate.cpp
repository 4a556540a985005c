#include "mcens/simulate.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mcens/rng.hpp"

namespace mcens {

double MCSample::phat() const
{
  return k() == 0 ? 0.0 : static_cast<double>(m()) / static_cast<double>(k());
}

void validate(const MCSample& sample)
{
  if (sample.k() == 0)
    throw std::invalid_argument("sample is empty");
  auto check = [](const std::vector<double>& v, const char* which) {
    for (const double value : v)
      if (!(value > 0.0) || !std::isfinite(value))
        throw std::invalid_argument(std::string("sample ") + which +
                                    " values must be positive and finite");
  };
  check(sample.x, "uncensored");
  check(sample.y, "censored");
}

MCSample gen_mc(const TrueModel& model, std::size_t m, std::size_t n, std::uint64_t seed)
{
  if (m + n == 0)
    throw std::invalid_argument("gen_mc: m + n must be at least 1");
  Rng rng{ seed };
  MCSample out;
  out.x.reserve(m);
  out.y.reserve(n);
  for (std::size_t i = 0; i < m; ++i)
    out.x.push_back(model.sample(rng));
  for (std::size_t j = 0; j < n; ++j) {
    const double z = model.sample(rng);
    out.y.push_back(z * open_uniform(rng));
  }
  return out;
}

LbSample gen_lb(const TrueModel& fu_model,
                const TrueModel& censor,
                std::size_t target_m,
                std::size_t target_n,
                std::uint64_t seed)
{
  const double mu = fu_model.mean();
  if (!std::isfinite(mu) || !(mu > 0.0))
    throw std::invalid_argument("gen_lb: mean of f_U must be finite and positive");
  if (target_m + target_n == 0)
    throw std::invalid_argument("gen_lb: empty quota");

  // Total lifetimes observed in a prevalent cohort follow t f_U(t) / mu.
  const TrueModel biased = fu_model.length_biased();
  Rng rng{ seed };
  LbSample out;
  out.records.reserve(target_m + target_n);
  std::size_t got_m = 0;
  std::size_t got_n = 0;
  while (got_m < target_m || got_n < target_n) {
    if (out.draws >= kLbMaxDraws)
      throw std::runtime_error("gen_lb: quotas not reached after " + std::to_string(kLbMaxDraws) +
                               " draws (uncensored " + std::to_string(got_m) + "/" +
                               std::to_string(target_m) + ", censored " + std::to_string(got_n) +
                               "/" + std::to_string(target_n) + ")");
    ++out.draws;
    const double total = biased.sample(rng);
    const double age = total * open_uniform(rng);
    const double residual = total - age;
    const double d = censor.sample(rng);
    const bool observed = residual <= d;
    if (observed && got_m < target_m) {
      out.records.push_back({ age, residual, true });
      ++got_m;
    } else if (!observed && got_n < target_n) {
      out.records.push_back({ age, d, false });
      ++got_n;
    }
  }
  return out;
}

MCSample lb_to_mc(const LbSample& sample)
{
  if (sample.records.empty())
    throw std::invalid_argument("lb_to_mc: empty sample");
  MCSample out;
  for (const auto& r : sample.records)
    (r.delta ? out.x : out.y).push_back(r.total());
  return out;
}

} // namespace mcens
