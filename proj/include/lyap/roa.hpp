#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "lyap/dynamics.hpp"
#include "lyap/network.hpp"
#include "lyap/verifier.hpp"

namespace lyap {

// Largest certified sublevel set {V <= c} that stays inside the valid
// region, with a Monte-Carlo area estimate and excluded-ball diagnostics.
struct LevelSetResult {
  double c_star = 0.0;
  bool containment = false;  // false: no level could be certified at all
  double area = 0.0;         // Monte-Carlo estimate of area({V <= c_star})
  double area_stderr = 0.0;
  // Excluded-ball sandwich: c1 is a certified lower bound of V outside the
  // eps-ball, so {V <= c} lies inside the ball for every c < c1; c2 is a
  // certified upper bound of V on the ball, so the ball lies inside
  // {V <= c2}. The verdict records whether the full chain of inclusions
  // {V <= c1} within B_eps within {V <= c2} within {V <= c_star} went
  // through; it is reported, never assumed.
  double c1 = 0.0;
  double c2 = 0.0;
  bool sandwich = false;
};

struct LevelSetOptions {
  double eps = 0.1;      // excluded-ball radius for the sandwich fields
  int bisect_iters = 20;
  std::int64_t area_points = 1'000'000;
  std::uint64_t seed = 0;
  double bound_tol = 1e-3;  // relative gap for the c1/c2 brackets
  // Containment queries: a query that exhausts this budget counts as
  // inadmissible, which only makes c_star conservative.
  double precision = 0.01;
  std::uint64_t falsify_max_boxes = 500'000;
  int workers = 1;
};

// Bisection (bisect_iters rounds) for the largest c the falsifier can prove
// keeps {V <= c} off the domain boundary: each candidate asks for a point of
// the boundary sphere with V(x) <= c and is admissible exactly when that is
// refuted. The sphere has radius domain_radius when positive, otherwise the
// largest origin-centered sphere inscribed in the box.
LevelSetResult largest_level(const ExprPtr& V, const Box& domain,
                             double domain_radius,
                             const LevelSetOptions& opt = {});
LevelSetResult largest_level(const OneHiddenNet& V, const ControlSystem& sys,
                             const LevelSetOptions& opt = {});

struct AttractionOptions {
  double t_end = 30.0;
  double dt = 1e-3;
  double converge_norm = 1e-2;  // final-state test ||x(t_end)|| < this
  double v_slack = 1e-4;        // tolerated per-step increase of V
  int workers = 1;
  // Rejection sampling gives up after this many draws per requested probe.
  std::int64_t max_sample_attempts = 10'000;
};

struct AttractionResult {
  int n_probes = 0;
  int converged = 0;
  int failures = 0;  // guard-tripping or non-finite rollouts
  double fraction = 0.0;
  double max_v_step = 0.0;         // largest single-step increase of V seen
  Eigen::MatrixXd starts;          // accepted initial states, one per column
  std::vector<double> final_norms; // ||x|| at the end of each rollout
};

// Draws n_probes states with V(x) <= level.c_star inside the plant domain,
// rolls each out for t_end seconds of the true closed loop, and counts the
// ones that end within converge_norm of the origin. V is monitored along
// every trajectory; max_v_step reports the worst single-step increase.
AttractionResult empirical_attraction(const ClosedLoopSystem& sys,
                                      const LevelSetResult& level,
                                      const OneHiddenNet& V, int n_probes,
                                      std::uint64_t seed,
                                      const AttractionOptions& opt = {});

// CSV "x1,x2,v,dv" over an inclusive resolution x resolution grid of the
// domain hull, x1 varying slowest; dv is the derivative of V along the
// closed loop. Planar systems only.
std::string export_grid(const OneHiddenNet& V, const ClosedLoopSystem& sys,
                        int resolution);
void export_grid_file(const OneHiddenNet& V, const ClosedLoopSystem& sys,
                      int resolution, const std::string& path);

}  // namespace lyap
