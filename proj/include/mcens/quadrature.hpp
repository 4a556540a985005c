#pragma once

#include <cstddef>
#include <stdexcept>

namespace mcens {

//! Composite Simpson rule with `intervals` (even, >= 2) panels on [a, b].
template <class F>
double simpson(F&& f, double a, double b, std::size_t intervals)
{
  if (intervals < 2 || intervals % 2 != 0)
    throw std::invalid_argument("simpson: interval count must be even and >= 2");
  const double step = (b - a) / static_cast<double>(intervals);
  double odd = 0.0;
  double even = 0.0;
  for (std::size_t i = 1; i < intervals; ++i) {
    const double v = f(a + step * static_cast<double>(i));
    if (i % 2 == 1)
      odd += v;
    else
      even += v;
  }
  return step / 3.0 * (f(a) + f(b) + 4.0 * odd + 2.0 * even);
}

} // namespace mcens
