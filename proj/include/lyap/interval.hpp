#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace lyap {

// Closed interval [lo, hi] with outward-rounded arithmetic: every operation
// returns an interval that contains the exact real-number result for all
// points of its operands. Outward rounding is done by next-representable-value
// inflation after each primitive op (portable; no FP rounding-mode fiddling).
// Inflation budget: 1 ulp per endpoint for IEEE-exact ops (+,-,*,/ ,sqrt),
// 4 ulps for libm transcendentals (tanh, sin, cos), which are accurate to a
// couple of ulps on every libm we target.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  Interval() = default;
  Interval(double l, double h) : lo(l), hi(h) {}
  static Interval point(double v) { return {v, v}; }

  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  double rad() const { return 0.5 * (hi - lo); }
  bool contains(double v) const { return lo <= v && v <= hi; }
  bool is_finite() const { return std::isfinite(lo) && std::isfinite(hi); }
};

namespace detail {

inline double next_down(double x) {
  return std::nextafter(x, -std::numeric_limits<double>::infinity());
}
inline double next_up(double x) {
  return std::nextafter(x, std::numeric_limits<double>::infinity());
}

inline double down_ulps(double x, int k) {
  for (int i = 0; i < k; ++i) x = next_down(x);
  return x;
}
inline double up_ulps(double x, int k) {
  for (int i = 0; i < k; ++i) x = next_up(x);
  return x;
}

// Sentinel for division by an interval containing zero: a huge but finite
// whole-line enclosure. Finite so downstream arithmetic stays NaN-free; the
// branch-and-bound layer recovers precision by splitting away from the pole.
constexpr double kWhole = 1e300;

inline Interval outward(double lo, double hi, int ulps = 1) {
  return {down_ulps(lo, ulps), up_ulps(hi, ulps)};
}

}  // namespace detail

inline Interval whole_line() { return {-detail::kWhole, detail::kWhole}; }

inline Interval operator+(Interval a, Interval b) {
  return detail::outward(a.lo + b.lo, a.hi + b.hi);
}

inline Interval operator-(Interval a, Interval b) {
  return detail::outward(a.lo - b.hi, a.hi - b.lo);
}

inline Interval operator-(Interval a) { return {-a.hi, -a.lo}; }

inline Interval operator*(Interval a, Interval b) {
  const double p1 = a.lo * b.lo, p2 = a.lo * b.hi;
  const double p3 = a.hi * b.lo, p4 = a.hi * b.hi;
  return detail::outward(std::min(std::min(p1, p2), std::min(p3, p4)),
                         std::max(std::max(p1, p2), std::max(p3, p4)));
}

inline Interval operator/(Interval a, Interval b) {
  if (b.lo <= 0.0 && b.hi >= 0.0) return whole_line();
  const double q1 = a.lo / b.lo, q2 = a.lo / b.hi;
  const double q3 = a.hi / b.lo, q4 = a.hi / b.hi;
  return detail::outward(std::min(std::min(q1, q2), std::min(q3, q4)),
                         std::max(std::max(q1, q2), std::max(q3, q4)));
}

inline Interval sqr(Interval a) {
  const double m1 = a.lo * a.lo, m2 = a.hi * a.hi;
  const double hi = std::max(m1, m2);
  const double lo = (a.lo <= 0.0 && a.hi >= 0.0) ? 0.0 : std::min(m1, m2);
  return {lo == 0.0 ? 0.0 : detail::next_down(lo), detail::next_up(hi)};
}

inline Interval sqrt(Interval a) {
  const double lo = a.lo <= 0.0 ? 0.0 : detail::next_down(std::sqrt(a.lo));
  return {std::max(0.0, lo), detail::next_up(std::sqrt(std::max(0.0, a.hi)))};
}

inline Interval abs(Interval a) {
  if (a.lo >= 0.0) return a;
  if (a.hi <= 0.0) return {-a.hi, -a.lo};
  return {0.0, std::max(-a.lo, a.hi)};
}

inline Interval tanh(Interval a) {
  // Monotone, range (-1,1); clamp keeps the enclosure inside the closure.
  return {std::max(-1.0, detail::down_ulps(std::tanh(a.lo), 4)),
          std::min(1.0, detail::up_ulps(std::tanh(a.hi), 4))};
}

Interval sin(Interval a);
Interval cos(Interval a);

inline Interval hull(Interval a, Interval b) {
  return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)};
}

// Axis-aligned hyperrectangle; the currency of the branch-and-bound verifier.
struct Box {
  std::vector<Interval> dims;

  Box() = default;
  explicit Box(std::vector<Interval> d) : dims(std::move(d)) {}
  static Box cube(int n, double half_width) {
    return Box(std::vector<Interval>(n, Interval(-half_width, half_width)));
  }

  int size() const { return static_cast<int>(dims.size()); }

  // Max per-dimension width.
  double width() const {
    double w = 0.0;
    for (const auto& d : dims) w = std::max(w, d.width());
    return w;
  }

  std::vector<double> center() const {
    std::vector<double> c(dims.size());
    for (size_t i = 0; i < dims.size(); ++i) c[i] = dims[i].mid();
    return c;
  }

  std::string to_string() const;
};

}  // namespace lyap
