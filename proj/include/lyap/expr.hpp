#pragma once

#include <cstdint>
#include <memory>
#include <unordered_map>
#include <vector>

#include "lyap/interval.hpp"

namespace lyap {

// Expression trees over {const, var, +, -, *, /, neg, sin, cos, tanh, sqr,
// sqrt, abs}. Shared sub-expressions are real shared nodes (a DAG), which
// symbolic differentiation preserves, so Lie derivatives of network-valued
// functions stay compact. Interval evaluation of any tree encloses its real
// evaluation at every point of the box (fundamental enclosure property).
enum class Op : std::uint8_t {
  kConst, kVar, kAdd, kSub, kMul, kDiv, kNeg, kSin, kCos, kTanh, kSqr, kSqrt,
  kAbs
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  Op op;
  double cval = 0.0;  // kConst payload
  int var = -1;       // kVar payload
  ExprPtr a, b;       // children
};

// Smart constructors; they fold constants and drop algebraic no-ops so that
// derivative trees stay small.
ExprPtr cst(double v);
ExprPtr var(int index);
ExprPtr add(ExprPtr x, ExprPtr y);
ExprPtr sub(ExprPtr x, ExprPtr y);
ExprPtr mul(ExprPtr x, ExprPtr y);
ExprPtr div(ExprPtr x, ExprPtr y);
ExprPtr neg(ExprPtr x);
ExprPtr sin(ExprPtr x);
ExprPtr cos(ExprPtr x);
ExprPtr tanh(ExprPtr x);
ExprPtr sqr(ExprPtr x);
ExprPtr sqrt(ExprPtr x);
ExprPtr abs(ExprPtr x);

inline ExprPtr operator+(ExprPtr x, ExprPtr y) { return add(std::move(x), std::move(y)); }
inline ExprPtr operator-(ExprPtr x, ExprPtr y) { return sub(std::move(x), std::move(y)); }
inline ExprPtr operator*(ExprPtr x, ExprPtr y) { return mul(std::move(x), std::move(y)); }
inline ExprPtr operator/(ExprPtr x, ExprPtr y) { return div(std::move(x), std::move(y)); }
inline ExprPtr operator-(ExprPtr x) { return neg(std::move(x)); }

// Sum of products, the shape of every Lie derivative.
ExprPtr dot(const std::vector<ExprPtr>& xs, const std::vector<ExprPtr>& ys);

// Symbolic partial derivative d expr / d var(index). Derivatives of shared
// nodes are shared; tanh', sin', cos' reuse the original child nodes.
// abs is not differentiable here and throws.
ExprPtr diff(const ExprPtr& e, int index);

int max_var_index(const ExprPtr& e);

// Direct (memoized DAG walk) evaluation. Convenience API; hot paths use Tape.
double eval_point(const ExprPtr& e, const std::vector<double>& x);
Interval eval_interval(const ExprPtr& e, const Box& b);

// A multi-root expression DAG flattened to a topologically sorted instruction
// list. One compilation serves both point (double) and interval evaluation;
// scratch buffers are caller-owned so repeated evaluation allocates nothing.
struct Tape {
  struct Instr {
    Op op;
    std::int32_t a = -1, b = -1;
    double cval = 0.0;
    std::int32_t var = -1;
  };
  std::vector<Instr> code;
  std::vector<std::int32_t> roots;
  int n_vars = 0;

  template <class T, class VarLookup>
  void eval(std::vector<T>& slots, const VarLookup& vars) const;

  void eval_point(std::vector<double>& slots, const std::vector<double>& x) const;
  void eval_interval(std::vector<Interval>& slots, const Box& b) const;
};

Tape compile(const std::vector<ExprPtr>& roots);

template <class T, class VarLookup>
void Tape::eval(std::vector<T>& slots, const VarLookup& vars) const {
  slots.resize(code.size());
  for (std::size_t i = 0; i < code.size(); ++i) {
    const Instr& in = code[i];
    switch (in.op) {
      case Op::kConst: slots[i] = T(in.cval, in.cval); break;
      case Op::kVar: slots[i] = vars(in.var); break;
      case Op::kAdd: slots[i] = slots[in.a] + slots[in.b]; break;
      case Op::kSub: slots[i] = slots[in.a] - slots[in.b]; break;
      case Op::kMul: slots[i] = slots[in.a] * slots[in.b]; break;
      case Op::kDiv: slots[i] = slots[in.a] / slots[in.b]; break;
      case Op::kNeg: slots[i] = -slots[in.a]; break;
      case Op::kSin: slots[i] = sin(slots[in.a]); break;
      case Op::kCos: slots[i] = cos(slots[in.a]); break;
      case Op::kTanh: slots[i] = tanh(slots[in.a]); break;
      case Op::kSqr: slots[i] = sqr(slots[in.a]); break;
      case Op::kSqrt: slots[i] = sqrt(slots[in.a]); break;
      case Op::kAbs: slots[i] = abs(slots[in.a]); break;
    }
  }
}

}  // namespace lyap
