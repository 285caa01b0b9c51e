#include "lyap/roa.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "lyap/lyapunov.hpp"

namespace lyap {

namespace {

double uniform(std::mt19937_64& eng, double lo, double hi) {
  const double u = static_cast<double>(eng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

// Radius of the boundary sphere the containment queries run against.
double boundary_radius(const Box& domain, double domain_radius) {
  if (domain_radius > 0.0) return domain_radius;
  double r = std::numeric_limits<double>::infinity();
  for (const Interval& d : domain.dims)
    r = std::min(r, std::min(-d.lo, d.hi));
  if (!(r > 0.0))
    throw std::invalid_argument(
        "largest_level: the origin must be interior to the domain");
  return r;
}

}  // namespace

LevelSetResult largest_level(const ExprPtr& Vexpr, const Box& domain,
                             double domain_radius,
                             const LevelSetOptions& opt) {
  const int n = static_cast<int>(domain.size());
  if (n < 1) throw std::invalid_argument("largest_level: empty domain");
  if (opt.bisect_iters < 1 || opt.area_points < 1 || !(opt.eps >= 0.0) ||
      !(opt.bound_tol > 0.0) || !(opt.precision > 0.0))
    throw std::invalid_argument("largest_level: bad options");

  const double r = boundary_radius(domain, domain_radius);

  FalsifyOptions fo;
  fo.precision = opt.precision;
  fo.max_boxes = opt.falsify_max_boxes;
  fo.workers = opt.workers;
  const auto admissible = [&](double c) {
    VerifyProblem p;
    p.region = Region{domain, r, r};
    p.V = sub(Vexpr, cst(c));
    p.lie = cst(-1.0);  // the decrease disjunct is vacuous here
    p.beta = 0.0;
    return falsify(p, fo).kind == VerdictKind::kUnsat;
  };

  LevelSetResult out;
  // Sound (if loose) upper bracket for the bisection.
  double hi = eval_interval(Vexpr, domain).hi;
  if (hi > 0.0) {
    double lo = 0.0;
    bool proven = false;
    for (int i = 0; i < opt.bisect_iters; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (admissible(mid)) {
        lo = mid;
        proven = true;
      } else {
        hi = mid;
      }
    }
    out.c_star = proven ? lo : 0.0;
    out.containment = proven;
  }

  if (opt.eps > 0.0) {
    const Region annulus{domain, opt.eps, r};
    const Region ball{Box::cube(n, opt.eps), 0.0, opt.eps};
    out.c1 = bound_inf(Vexpr, annulus, opt.bound_tol).bound.lo;
    out.c2 = bound_sup(Vexpr, ball, opt.bound_tol).bound.hi;
    out.sandwich = out.c1 > 0.0 && out.c1 < out.c2 && out.c2 <= out.c_star;
  }

  // Monte-Carlo area of {x in D : V(x) <= c_star} over the hull box.
  const Tape tape = compile({Vexpr});
  std::vector<double> slots, x(n);
  double volume = 1.0;
  for (const Interval& d : domain.dims) volume *= d.hi - d.lo;
  std::mt19937_64 eng(opt.seed);
  std::int64_t inside = 0;
  for (std::int64_t i = 0; i < opt.area_points; ++i) {
    double nsq = 0.0;
    for (int d = 0; d < n; ++d) {
      x[d] = uniform(eng, domain.dims[d].lo, domain.dims[d].hi);
      nsq += x[d] * x[d];
    }
    if (domain_radius > 0.0 && nsq > domain_radius * domain_radius) continue;
    tape.eval_point(slots, x);
    if (slots[tape.roots[0]] <= out.c_star) ++inside;
  }
  const double p =
      static_cast<double>(inside) / static_cast<double>(opt.area_points);
  out.area = p * volume;
  out.area_stderr =
      volume * std::sqrt(p * (1.0 - p) /
                         static_cast<double>(opt.area_points));
  return out;
}

LevelSetResult largest_level(const OneHiddenNet& V, const ControlSystem& sys,
                             const LevelSetOptions& opt) {
  if (V.in_dim() != sys.state_dim || V.out_dim() != 1)
    throw std::invalid_argument("largest_level: V does not match the system");
  std::vector<ExprPtr> xs;
  for (int i = 0; i < sys.state_dim; ++i) xs.push_back(var(i));
  return largest_level(net_expr(V, xs)[0], sys.domain, sys.domain_radius, opt);
}

AttractionResult empirical_attraction(const ClosedLoopSystem& sys,
                                      const LevelSetResult& level,
                                      const OneHiddenNet& V, int n_probes,
                                      std::uint64_t seed,
                                      const AttractionOptions& opt) {
  const ControlSystem& plant = sys.plant;
  const int n = plant.state_dim;
  if (V.in_dim() != n || V.out_dim() != 1)
    throw std::invalid_argument(
        "empirical_attraction: V does not match the system");
  if (n_probes < 1 || !(opt.t_end > 0.0) || !(opt.dt > 0.0) ||
      !(opt.converge_norm > 0.0) || opt.workers < 1 ||
      opt.max_sample_attempts < 1)
    throw std::invalid_argument("empirical_attraction: bad options");
  if (!level.containment)
    throw std::invalid_argument(
        "empirical_attraction: level set is degenerate");

  AttractionResult out;
  out.n_probes = n_probes;
  out.starts.resize(n, n_probes);
  out.final_norms.assign(n_probes, 0.0);

  // Rejection sampling over the hull box: keep draws inside the domain with
  // V at or below the certified level.
  std::mt19937_64 eng(seed);
  std::int64_t attempts = 0;
  const std::int64_t max_attempts =
      opt.max_sample_attempts * static_cast<std::int64_t>(n_probes);
  for (int j = 0; j < n_probes;) {
    if (++attempts > max_attempts)
      throw std::runtime_error(
          "empirical_attraction: level set too small to sample");
    Eigen::VectorXd x(n);
    for (int d = 0; d < n; ++d)
      x(d) = uniform(eng, plant.domain.dims[d].lo, plant.domain.dims[d].hi);
    if (plant.domain_radius > 0.0 && x.norm() > plant.domain_radius) continue;
    if (forward(V, x)(0) > level.c_star) continue;
    out.starts.col(j++) = x;
  }

  // The guard box mirrors the simulator's: leaving ten times the domain
  // hull counts the rollout as failed.
  double guard = 0.0;
  for (const Interval& d : plant.domain.dims)
    guard = std::max(guard, std::max(std::abs(d.lo), std::abs(d.hi)));
  guard *= 10.0;
  const std::int64_t steps =
      static_cast<std::int64_t>(std::ceil(opt.t_end / opt.dt - 1e-9));

  std::vector<char> ok(n_probes, 0);
  std::vector<char> failed(n_probes, 0);
  std::vector<double> worst_dv(n_probes, 0.0);

  const auto run_range = [&](int begin, int end) {
    for (int j = begin; j < end; ++j) {
      Eigen::VectorXd x = out.starts.col(j);
      double v_prev = forward(V, x)(0);
      bool bad = false;
      for (std::int64_t s = 0; s < steps; ++s) {
        x = step_rk4(sys, x, opt.dt);
        if (!x.allFinite() || x.cwiseAbs().maxCoeff() > guard) {
          bad = true;
          break;
        }
        const double v = forward(V, x)(0);
        worst_dv[j] = std::max(worst_dv[j], v - v_prev);
        v_prev = v;
      }
      failed[j] = bad ? 1 : 0;
      out.final_norms[j] = x.norm();
      ok[j] = (!bad && x.norm() < opt.converge_norm) ? 1 : 0;
    }
  };

  const int workers = std::min(opt.workers, n_probes);
  if (workers <= 1) {
    run_range(0, n_probes);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      const int begin = static_cast<int>(
          static_cast<std::int64_t>(n_probes) * w / workers);
      const int end = static_cast<int>(
          static_cast<std::int64_t>(n_probes) * (w + 1) / workers);
      pool.emplace_back(run_range, begin, end);
    }
    for (std::thread& t : pool) t.join();
  }

  for (int j = 0; j < n_probes; ++j) {
    out.converged += ok[j];
    out.failures += failed[j];
    out.max_v_step = std::max(out.max_v_step, worst_dv[j]);
  }
  out.fraction =
      static_cast<double>(out.converged) / static_cast<double>(n_probes);
  return out;
}

std::string export_grid(const OneHiddenNet& V, const ClosedLoopSystem& sys,
                        int resolution) {
  const ControlSystem& plant = sys.plant;
  if (plant.state_dim != 2)
    throw std::invalid_argument("export_grid: planar systems only");
  if (V.in_dim() != 2 || V.out_dim() != 1)
    throw std::invalid_argument("export_grid: V does not match the system");
  if (resolution < 2)
    throw std::invalid_argument("export_grid: resolution must be at least 2");

  const auto field = [&](const Eigen::VectorXd& x) { return sys.eval(x); };
  std::string csv = "x1,x2,v,dv\n";
  csv.reserve(csv.size() + static_cast<std::size_t>(resolution) * resolution * 80);
  char line[128];
  Eigen::VectorXd x(2);
  for (int i = 0; i < resolution; ++i) {
    const Interval& d0 = plant.domain.dims[0];
    x(0) = d0.lo + (d0.hi - d0.lo) * i / (resolution - 1);
    for (int j = 0; j < resolution; ++j) {
      const Interval& d1 = plant.domain.dims[1];
      x(1) = d1.lo + (d1.hi - d1.lo) * j / (resolution - 1);
      const double v = forward(V, x)(0);
      const double dv = lie_derivative(V, field, x);
      std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g\n", x(0),
                    x(1), v, dv);
      csv += line;
    }
  }
  return csv;
}

void export_grid_file(const OneHiddenNet& V, const ClosedLoopSystem& sys,
                      int resolution, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("export_grid: cannot open " + path);
  f << export_grid(V, sys, resolution);
  if (!f) throw std::runtime_error("export_grid: write failed for " + path);
}

}  // namespace lyap
