#include "lyap/expr.hpp"

#include <cmath>
#include <stdexcept>

namespace lyap {

namespace {

ExprPtr make(Op op, double cval, int var, ExprPtr a, ExprPtr b) {
  auto e = std::make_shared<Expr>();
  e->op = op;
  e->cval = cval;
  e->var = var;
  e->a = std::move(a);
  e->b = std::move(b);
  return e;
}

bool is_const(const ExprPtr& e, double v) {
  return e->op == Op::kConst && e->cval == v;
}

}  // namespace

ExprPtr cst(double v) { return make(Op::kConst, v, -1, nullptr, nullptr); }

ExprPtr var(int index) {
  if (index < 0) throw std::invalid_argument("expr: negative var index");
  return make(Op::kVar, 0.0, index, nullptr, nullptr);
}

ExprPtr add(ExprPtr x, ExprPtr y) {
  if (x->op == Op::kConst && y->op == Op::kConst) return cst(x->cval + y->cval);
  if (is_const(x, 0.0)) return y;
  if (is_const(y, 0.0)) return x;
  return make(Op::kAdd, 0.0, -1, std::move(x), std::move(y));
}

ExprPtr sub(ExprPtr x, ExprPtr y) {
  if (x->op == Op::kConst && y->op == Op::kConst) return cst(x->cval - y->cval);
  if (is_const(y, 0.0)) return x;
  if (is_const(x, 0.0)) return neg(std::move(y));
  return make(Op::kSub, 0.0, -1, std::move(x), std::move(y));
}

ExprPtr mul(ExprPtr x, ExprPtr y) {
  if (x->op == Op::kConst && y->op == Op::kConst) return cst(x->cval * y->cval);
  if (is_const(x, 0.0) || is_const(y, 0.0)) return cst(0.0);
  if (is_const(x, 1.0)) return y;
  if (is_const(y, 1.0)) return x;
  if (is_const(x, -1.0)) return neg(std::move(y));
  if (is_const(y, -1.0)) return neg(std::move(x));
  return make(Op::kMul, 0.0, -1, std::move(x), std::move(y));
}

ExprPtr div(ExprPtr x, ExprPtr y) {
  if (y->op == Op::kConst && y->cval == 0.0)
    throw std::invalid_argument("expr: division by constant zero");
  if (x->op == Op::kConst && y->op == Op::kConst) return cst(x->cval / y->cval);
  if (is_const(x, 0.0)) return cst(0.0);
  if (is_const(y, 1.0)) return x;
  return make(Op::kDiv, 0.0, -1, std::move(x), std::move(y));
}

ExprPtr neg(ExprPtr x) {
  if (x->op == Op::kConst) return cst(-x->cval);
  if (x->op == Op::kNeg) return x->a;
  return make(Op::kNeg, 0.0, -1, std::move(x), nullptr);
}

ExprPtr sin(ExprPtr x) {
  if (x->op == Op::kConst) return cst(std::sin(x->cval));
  return make(Op::kSin, 0.0, -1, std::move(x), nullptr);
}

ExprPtr cos(ExprPtr x) {
  if (x->op == Op::kConst) return cst(std::cos(x->cval));
  return make(Op::kCos, 0.0, -1, std::move(x), nullptr);
}

ExprPtr tanh(ExprPtr x) {
  if (x->op == Op::kConst) return cst(std::tanh(x->cval));
  return make(Op::kTanh, 0.0, -1, std::move(x), nullptr);
}

ExprPtr sqr(ExprPtr x) {
  if (x->op == Op::kConst) return cst(x->cval * x->cval);
  return make(Op::kSqr, 0.0, -1, std::move(x), nullptr);
}

ExprPtr sqrt(ExprPtr x) {
  if (x->op == Op::kConst) return cst(std::sqrt(x->cval));
  return make(Op::kSqrt, 0.0, -1, std::move(x), nullptr);
}

ExprPtr abs(ExprPtr x) {
  if (x->op == Op::kConst) return cst(std::abs(x->cval));
  return make(Op::kAbs, 0.0, -1, std::move(x), nullptr);
}

ExprPtr dot(const std::vector<ExprPtr>& xs, const std::vector<ExprPtr>& ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("dot: length mismatch");
  ExprPtr acc = cst(0.0);
  for (size_t i = 0; i < xs.size(); ++i) acc = add(acc, mul(xs[i], ys[i]));
  return acc;
}

namespace {

using DiffCache = std::unordered_map<const Expr*, ExprPtr>;

ExprPtr diff_rec(const ExprPtr& e, int index, DiffCache& cache) {
  auto it = cache.find(e.get());
  if (it != cache.end()) return it->second;
  ExprPtr d;
  switch (e->op) {
    case Op::kConst: d = cst(0.0); break;
    case Op::kVar: d = cst(e->var == index ? 1.0 : 0.0); break;
    case Op::kAdd: d = add(diff_rec(e->a, index, cache), diff_rec(e->b, index, cache)); break;
    case Op::kSub: d = sub(diff_rec(e->a, index, cache), diff_rec(e->b, index, cache)); break;
    case Op::kMul:
      d = add(mul(diff_rec(e->a, index, cache), e->b),
              mul(e->a, diff_rec(e->b, index, cache)));
      break;
    case Op::kDiv:
      // (a/b)' = a'/b - a b'/b^2
      d = sub(div(diff_rec(e->a, index, cache), e->b),
              div(mul(e->a, diff_rec(e->b, index, cache)), sqr(e->b)));
      break;
    case Op::kNeg: d = neg(diff_rec(e->a, index, cache)); break;
    case Op::kSin: d = mul(cos(e->a), diff_rec(e->a, index, cache)); break;
    case Op::kCos: d = neg(mul(sin(e->a), diff_rec(e->a, index, cache))); break;
    case Op::kTanh:
      // Reuses the original tanh node so the compiled tape shares it.
      d = mul(sub(cst(1.0), sqr(e)), diff_rec(e->a, index, cache));
      break;
    case Op::kSqr: d = mul(mul(cst(2.0), e->a), diff_rec(e->a, index, cache)); break;
    case Op::kSqrt: d = div(diff_rec(e->a, index, cache), mul(cst(2.0), sqrt(e->a))); break;
    case Op::kAbs: throw std::domain_error("diff: abs is not differentiable");
  }
  cache.emplace(e.get(), d);
  return d;
}

}  // namespace

ExprPtr diff(const ExprPtr& e, int index) {
  DiffCache cache;
  return diff_rec(e, index, cache);
}

namespace {

void max_var_rec(const ExprPtr& e, int& m,
                 std::unordered_map<const Expr*, bool>& seen) {
  if (!e || seen.count(e.get())) return;
  seen.emplace(e.get(), true);
  if (e->op == Op::kVar) m = std::max(m, e->var);
  max_var_rec(e->a, m, seen);
  max_var_rec(e->b, m, seen);
}

}  // namespace

int max_var_index(const ExprPtr& e) {
  int m = -1;
  std::unordered_map<const Expr*, bool> seen;
  max_var_rec(e, m, seen);
  return m;
}

Tape compile(const std::vector<ExprPtr>& roots) {
  Tape t;
  std::unordered_map<const Expr*, std::int32_t> slot;
  // Iterative post-order to avoid deep recursion on large network trees.
  std::vector<std::pair<const Expr*, bool>> stack;
  for (const auto& root : roots) {
    stack.emplace_back(root.get(), false);
    while (!stack.empty()) {
      auto [e, expanded] = stack.back();
      stack.pop_back();
      if (slot.count(e)) continue;
      if (!expanded) {
        stack.emplace_back(e, true);
        if (e->a && !slot.count(e->a.get())) stack.emplace_back(e->a.get(), false);
        if (e->b && !slot.count(e->b.get())) stack.emplace_back(e->b.get(), false);
      } else {
        Tape::Instr in;
        in.op = e->op;
        in.cval = e->cval;
        in.var = e->var;
        if (e->a) in.a = slot.at(e->a.get());
        if (e->b) in.b = slot.at(e->b.get());
        if (e->op == Op::kVar) t.n_vars = std::max(t.n_vars, e->var + 1);
        slot.emplace(e, static_cast<std::int32_t>(t.code.size()));
        t.code.push_back(in);
      }
    }
    t.roots.push_back(slot.at(root.get()));
  }
  return t;
}

void Tape::eval_point(std::vector<double>& slots, const std::vector<double>& x) const {
  slots.resize(code.size());
  for (size_t i = 0; i < code.size(); ++i) {
    const Instr& in = code[i];
    switch (in.op) {
      case Op::kConst: slots[i] = in.cval; break;
      case Op::kVar: slots[i] = x[in.var]; break;
      case Op::kAdd: slots[i] = slots[in.a] + slots[in.b]; break;
      case Op::kSub: slots[i] = slots[in.a] - slots[in.b]; break;
      case Op::kMul: slots[i] = slots[in.a] * slots[in.b]; break;
      case Op::kDiv: slots[i] = slots[in.a] / slots[in.b]; break;
      case Op::kNeg: slots[i] = -slots[in.a]; break;
      case Op::kSin: slots[i] = std::sin(slots[in.a]); break;
      case Op::kCos: slots[i] = std::cos(slots[in.a]); break;
      case Op::kTanh: slots[i] = std::tanh(slots[in.a]); break;
      case Op::kSqr: slots[i] = slots[in.a] * slots[in.a]; break;
      case Op::kSqrt: slots[i] = std::sqrt(slots[in.a]); break;
      case Op::kAbs: slots[i] = std::abs(slots[in.a]); break;
    }
  }
}

void Tape::eval_interval(std::vector<Interval>& slots, const Box& b) const {
  eval<Interval>(slots, [&](int v) { return b.dims[v]; });
}

double eval_point(const ExprPtr& e, const std::vector<double>& x) {
  Tape t = compile({e});
  std::vector<double> slots;
  t.eval_point(slots, x);
  return slots[t.roots[0]];
}

Interval eval_interval(const ExprPtr& e, const Box& b) {
  Tape t = compile({e});
  std::vector<Interval> slots;
  t.eval_interval(slots, b);
  return slots[t.roots[0]];
}

}  // namespace lyap
