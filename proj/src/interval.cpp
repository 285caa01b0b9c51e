#include "lyap/interval.hpp"

#include <sstream>

namespace lyap {

namespace {

// pi brackets: nearest double to pi and its outward neighbours.
constexpr double kPi = 3.14159265358979323846;
const double kPiDown = detail::next_down(kPi);
const double kPiUp = detail::next_up(kPi);

// Does [a.lo, a.hi] possibly contain (4k + off) * pi/2 for some integer k?
// off = 1 hits the maxima of sin, off = 3 its minima; off = 0 / 2 the maxima
// and minima of cos. Conservative: a few ulps of slack on each candidate, so
// maybe-contained counts as contained (this only ever widens the enclosure).
bool may_contain_critical(Interval a, double off) {
  const double two_pi = 2.0 * kPiDown;
  const double k_lo = std::floor(a.lo / two_pi) - 1.0;
  const double k_hi = std::ceil(a.hi / two_pi) + 1.0;
  for (double k = k_lo; k <= k_hi; k += 1.0) {
    const double factor = 4.0 * k + off;
    const double c1 = factor * 0.5 * kPiDown;
    const double c2 = factor * 0.5 * kPiUp;
    const double c_lo = detail::down_ulps(std::min(c1, c2), 2);
    const double c_hi = detail::up_ulps(std::max(c1, c2), 2);
    if (c_hi >= a.lo && c_lo <= a.hi) return true;
  }
  return false;
}

}  // namespace

Interval sin(Interval a) {
  if (!a.is_finite() || a.width() >= 2.0 * kPiDown) return {-1.0, 1.0};
  const double s1 = std::sin(a.lo), s2 = std::sin(a.hi);
  double lo = detail::down_ulps(std::min(s1, s2), 4);
  double hi = detail::up_ulps(std::max(s1, s2), 4);
  if (may_contain_critical(a, 1.0)) hi = 1.0;  // x = pi/2 + 2k pi
  if (may_contain_critical(a, 3.0)) lo = -1.0; // x = 3 pi/2 + 2k pi
  return {std::max(-1.0, lo), std::min(1.0, hi)};
}

Interval cos(Interval a) {
  if (!a.is_finite() || a.width() >= 2.0 * kPiDown) return {-1.0, 1.0};
  const double c1 = std::cos(a.lo), c2 = std::cos(a.hi);
  double lo = detail::down_ulps(std::min(c1, c2), 4);
  double hi = detail::up_ulps(std::max(c1, c2), 4);
  if (may_contain_critical(a, 0.0)) hi = 1.0;  // x = 2k pi
  if (may_contain_critical(a, 2.0)) lo = -1.0; // x = pi + 2k pi
  return {std::max(-1.0, lo), std::min(1.0, hi)};
}

std::string Box::to_string() const {
  std::ostringstream os;
  os.precision(10);
  os << "[";
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) os << " x ";
    os << "[" << dims[i].lo << ", " << dims[i].hi << "]";
  }
  os << "]";
  return os.str();
}

}  // namespace lyap
