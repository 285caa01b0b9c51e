#pragma once

#include <cstdint>
#include <vector>

#include "lyap/expr.hpp"
#include "lyap/interval.hpp"

namespace lyap {

// Where a falsification query lives: an axis-aligned box, optionally
// intersected with a euclidean ball ("x inside the valid domain") and minus
// an open ball around the origin ("x not closer than eps to the equilibrium").
// Norm constraints are kept as interval predicates on sum-of-squares rather
// than reparameterized; boxes fully inside the inner ball or fully outside
// the outer ball are pruned.
struct Region {
  Box domain;
  double inner_radius = 0.0;  // exclude sum(x_i^2) < inner_radius^2
  double outer_radius = 0.0;  // if > 0, require sum(x_i^2) <= outer_radius^2
};

// The falsification target: does there exist x in the region with
//   V(x) <= 0   or   lie(x) >= -beta ?
// UNSAT proves the Lyapunov conditions (V positive, Lie derivative below
// -beta) on the whole region.
struct VerifyProblem {
  Region region;
  ExprPtr V;
  ExprPtr lie;
  double beta = 0.0;
};

struct FalsifyOptions {
  // A box of max scaled width <= precision whose center violates a condition
  // (within `precision` slack) is reported as a delta-sat witness.
  double precision = 0.01;
  // Total boxes examined before giving up with an Unknown verdict.
  std::uint64_t max_boxes = 5'000'000;
  // Worker threads. The verdict is identical for any worker count.
  int workers = 1;
};

enum class VerdictKind { kUnsat, kDeltaSat, kUnknown };

struct Verdict {
  VerdictKind kind = VerdictKind::kUnknown;
  // UNSAT: number of leaf boxes refuted (the certificate size).
  std::uint64_t leaves_proven = 0;
  std::uint64_t boxes_processed = 0;
  // DeltaSat: the witness box and which disjunct survived at its center
  // (0: V(x) <= 0, 1: lie(x) >= -beta).
  Box witness;
  int violated_clause = -1;
  // Unknown: boxes still open when the budget ran out.
  std::uint64_t worklist_remaining = 0;
};

// Interval branch-and-bound falsifier. Splits the widest (domain-scaled)
// dimension; prunes with the natural interval enclosure first, then with the
// mean-value (centered) form, which is what makes stiff Lie derivatives
// tractable. Deterministic: boxes are processed in breadth-first waves and
// worker results are merged in box order.
Verdict falsify(const VerifyProblem& problem, const FalsifyOptions& opt = {});

// Certified bracket of sup e over a region.
struct SupBound {
  // bound.lo is achieved at some region point, bound.hi is a sound upper
  // bound; the true supremum lies inside.
  Interval bound;
  bool tight = false;  // gap closed to rel_tol before the budget ran out
  std::uint64_t boxes = 0;
};

SupBound bound_sup(const ExprPtr& e, const Region& region, double rel_tol,
                   std::uint64_t max_boxes = 2'000'000);

// Convenience: certified bracket of inf e (sup of -e, negated).
SupBound bound_inf(const ExprPtr& e, const Region& region, double rel_tol,
                   std::uint64_t max_boxes = 2'000'000);

}  // namespace lyap
