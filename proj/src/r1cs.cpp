#include "vpin/r1cs.hpp"

#include <omp.h>

#include <ostream>

#include "json.hpp"

namespace vpin::r1cs {

// ---------------------------------------------------------------------------
// Lc

void Lc::push(std::uint32_t var, const Fq& c) {
  if (heap_.empty() && n_ < kInline) {
    inline_[n_++] = Term{var, c};
    return;
  }
  if (heap_.empty()) heap_.assign(inline_, inline_ + n_);
  heap_.push_back(Term{var, c});
  n_ = kInline + 1;
}

Lc& Lc::add(const Lc& o, const Fq& scale) {
  for (std::size_t i = 0; i < o.size(); ++i) push(o[i].var, o[i].coeff * scale);
  return *this;
}

Lc Lc::operator+(const Lc& o) const {
  Lc r = *this;
  for (std::size_t i = 0; i < o.size(); ++i) r.push(o[i].var, o[i].coeff);
  return r;
}

Lc Lc::operator-(const Lc& o) const {
  Lc r = *this;
  for (std::size_t i = 0; i < o.size(); ++i) r.push(o[i].var, -o[i].coeff);
  return r;
}

// ---------------------------------------------------------------------------
// ConstraintSystem

ConstraintSystem::ConstraintSystem(Mode mode) : mode_(mode) {
  values_.push_back(Fq::one());
  kinds_.push_back(VarKind::one);
  slices_.push_back(0);
  offsets_.push_back(0);
}

Var ConstraintSystem::alloc_kind(const Fq& value, VarKind kind, std::uint32_t slice) {
  Var v{static_cast<std::uint32_t>(values_.size())};
  values_.push_back(value);
  kinds_.push_back(kind);
  slices_.push_back(slice);
  stats_.n_vars = values_.size();
  return v;
}

Fq ConstraintSystem::eval(const Lc& l) const {
  Fq acc;
  const Fq one = Fq::one();
  for (std::size_t i = 0; i < l.size(); ++i) {
    const Term& t = l[i];
    if (t.coeff == one) {
      acc += values_[t.var];
    } else {
      acc += t.coeff * values_[t.var];
    }
  }
  return acc;
}

void ConstraintSystem::enforce(const Lc& a, const Lc& b, const Lc& c) {
  if (mode_ == Mode::store) {
    for (const Lc* l : {&a, &b, &c}) {
      for (std::size_t i = 0; i < l->size(); ++i) {
        term_vars_.push_back((*l)[i].var);
        term_coeffs_.push_back((*l)[i].coeff);
      }
      offsets_.push_back(term_vars_.size());
    }
  } else if (!first_bad_ && !(eval(a) * eval(b) == eval(c))) {
    first_bad_ = n_rows_;
  }
  ++n_rows_;
  stats_.n_constraints = n_rows_;
}

Fq ConstraintSystem::eval_range(std::size_t lo, std::size_t hi) const {
  Fq acc;
  const Fq one = Fq::one();
  for (std::size_t i = lo; i < hi; ++i) {
    if (term_coeffs_[i] == one) {
      acc += values_[term_vars_[i]];
    } else {
      acc += term_coeffs_[i] * values_[term_vars_[i]];
    }
  }
  return acc;
}

bool ConstraintSystem::row_holds(std::size_t r) const {
  Fq a = eval_range(offsets_[3 * r], offsets_[3 * r + 1]);
  Fq b = eval_range(offsets_[3 * r + 1], offsets_[3 * r + 2]);
  Fq c = eval_range(offsets_[3 * r + 2], offsets_[3 * r + 3]);
  return a * b == c;
}

bool ConstraintSystem::is_satisfied_serial() const {
  if (mode_ == Mode::stream) return !first_bad_;
  for (std::size_t r = 0; r < n_rows_; ++r) {
    if (!row_holds(r)) return false;
  }
  return true;
}

bool ConstraintSystem::is_satisfied() const {
  if (mode_ == Mode::stream) return !first_bad_;
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(n_rows_);
  int bad = 0;
#pragma omp parallel for schedule(static) reduction(| : bad)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    if (!row_holds(static_cast<std::size_t>(r))) bad |= 1;
  }
  return bad == 0;
}

std::optional<std::size_t> ConstraintSystem::first_violation() const {
  if (mode_ == Mode::stream) return first_bad_;
  for (std::size_t r = 0; r < n_rows_; ++r) {
    if (!row_holds(r)) return r;
  }
  return std::nullopt;
}

std::vector<Var> ConstraintSystem::public_vars() const {
  std::vector<Var> out;
  for (std::size_t i = 0; i < kinds_.size(); ++i) {
    if (kinds_[i] == VarKind::pub) out.push_back(Var{static_cast<std::uint32_t>(i)});
  }
  return out;
}

std::vector<Fq> ConstraintSystem::public_values() const {
  std::vector<Fq> out;
  for (std::size_t i = 0; i < kinds_.size(); ++i) {
    if (kinds_[i] == VarKind::pub) out.push_back(values_[i]);
  }
  return out;
}

std::vector<Var> ConstraintSystem::committed_vars(std::uint32_t slice) const {
  std::vector<Var> out;
  for (std::size_t i = 0; i < kinds_.size(); ++i) {
    if (kinds_[i] == VarKind::committed && slices_[i] == slice) out.push_back(Var{static_cast<std::uint32_t>(i)});
  }
  return out;
}

namespace {

std::string coeff_str(const Fq& c) {
  Fq n = -c;
  // small negatives read better than 252-bit residues
  if (bit_length(n.to_u256()) < bit_length(c.to_u256())) return "-" + n.to_dec();
  return c.to_dec();
}

}  // namespace

void ConstraintSystem::dump(std::ostream& os) const {
  std::size_t pub = 0;
  for (auto k : kinds_) pub += k == VarKind::pub;
  os << "r1cs vars=" << values_.size() << " public=" << pub << " constraints=" << n_rows_ << "\n";
  if (mode_ == Mode::stream) return;
  for (std::size_t r = 0; r < n_rows_; ++r) {
    for (int k = 0; k < 3; ++k) {
      if (k) os << " |";
      for (std::size_t i = offsets_[3 * r + k]; i < offsets_[3 * r + k + 1]; ++i) {
        os << " " << term_vars_[i] << ":" << coeff_str(term_coeffs_[i]);
      }
    }
    os << "\n";
  }
}

// ---------------------------------------------------------------------------
// Gadgets

CircuitPoint alloc_point(ConstraintSystem& cs, const E2Point& p, VarKind kind) {
  auto mk = [&](const Fq& v) { return kind == VarKind::pub ? cs.alloc_public(v) : cs.alloc(v); };
  CircuitPoint c;
  c.x = mk(p.inf ? Fq::zero() : p.x);
  c.y = mk(p.inf ? Fq::zero() : p.y);
  c.inf = mk(p.inf ? Fq::one() : Fq::zero());
  return c;
}

E2Point point_value(const ConstraintSystem& cs, const CircuitPoint& p) {
  if (cs.value(p.inf) == Fq::one()) return E2Point::infinity();
  return E2Point::of(cs.value(p.x), cs.value(p.y));
}

std::vector<Var> revbin_gadget(ConstraintSystem& cs, const Lc& a, unsigned n_bits) {
  U256 v = cs.eval(a).to_u256();
  if (bit_length(v) > n_bits) throw GadgetError("witness-overflow: scalar exceeds " + std::to_string(n_bits) + " bits");
  std::vector<Var> bits(n_bits);
  Lc packed;
  Fq pow = Fq::one();
  for (unsigned i = 0; i < n_bits; ++i) {
    bits[i] = cs.alloc(bit(v, i) ? Fq::one() : Fq::zero());
    cs.enforce(bits[i], bits[i], bits[i]);
    packed.add(bits[i], pow);
    pow = pow.dbl();
  }
  cs.enforce(packed, kOne, a);
  return bits;
}

namespace {

Var out_or_alloc(ConstraintSystem& cs, const CircuitPoint* out, Var CircuitPoint::*field, const Fq& v) {
  return out ? out->*field : cs.alloc(v);
}

CircuitPoint add_impl(ConstraintSystem& cs, const CircuitPoint& a, const CircuitPoint& b, const CircuitPoint* out) {
  const Fq one = Fq::one();
  Fq ia = cs.value(a.inf), ib = cs.value(b.inf);
  Fq xa = cs.value(a.x), ya = cs.value(a.y), xb = cs.value(b.x), yb = cs.value(b.y);
  Fq s_v = (one - ia) * (one - ib);
  Fq dx = xb - xa;
  Fq aux1_v;
  if (!dx.is_zero()) {
    aux1_v = s_v * dx.inv();
  } else if (!s_v.is_zero()) {
    throw GadgetError("degenerate-witness: point addition with equal x");
  }
  Fq aux2_v = (yb - ya) * aux1_v;
  Fq aux3_v = aux2_v.sqr();
  Fq xr_v = aux3_v - xa - xb;
  Fq aux4_v = aux2_v * (xa - xr_v);
  Fq yr_v = aux4_v - ya;

  Var s = cs.alloc(s_v);
  cs.enforce(Lc(kOne) - Lc(a.inf), Lc(kOne) - Lc(b.inf), s);
  CircuitPoint c;
  c.inf = out_or_alloc(cs, out, &CircuitPoint::inf, ia * ib);
  cs.enforce(a.inf, b.inf, c.inf);

  Var aux1 = cs.alloc(aux1_v);
  cs.enforce(aux1, Lc(b.x) - Lc(a.x), s);
  Var aux2 = cs.alloc(aux2_v);
  cs.enforce(Lc(b.y) - Lc(a.y), aux1, aux2);
  Var aux3 = cs.alloc(aux3_v);
  cs.enforce(aux2, aux2, aux3);
  Var xr = cs.alloc(xr_v);
  cs.enforce(Lc(aux3) - Lc(a.x) - Lc(b.x), kOne, xr);
  Var aux4 = cs.alloc(aux4_v);
  cs.enforce(aux2, Lc(a.x) - Lc(xr), aux4);
  Var yr = cs.alloc(yr_v);
  cs.enforce(Lc(aux4) - Lc(a.y), kOne, yr);

  // infinity encodes as (0,0), so when either input is infinite the sum of coordinates is the other point
  c.x = out_or_alloc(cs, out, &CircuitPoint::x, s_v * (xr_v - xa - xb) + xa + xb);
  cs.enforce(s, Lc(xr) - Lc(a.x) - Lc(b.x), Lc(c.x) - Lc(a.x) - Lc(b.x));
  c.y = out_or_alloc(cs, out, &CircuitPoint::y, s_v * (yr_v - ya - yb) + ya + yb);
  cs.enforce(s, Lc(yr) - Lc(a.y) - Lc(b.y), Lc(c.y) - Lc(a.y) - Lc(b.y));
  return c;
}

CircuitPoint dbl_impl(ConstraintSystem& cs, const Fq& alpha, const CircuitPoint& a) {
  const Fq one = Fq::one();
  Fq ia = cs.value(a.inf), xa = cs.value(a.x), ya = cs.value(a.y);
  Fq den = ya.dbl() + ia;
  Fq aux1_v;
  if (!den.is_zero()) {
    aux1_v = (one - ia) * den.inv();
  } else if (!(one - ia).is_zero()) {
    throw GadgetError("degenerate-witness: doubling a point with y = 0");
  }
  Fq aux2_v = xa.sqr();
  Fq aux3_v = (aux2_v + aux2_v + aux2_v + alpha) * aux1_v;
  Fq aux4_v = aux3_v.sqr();
  Fq xd_v = aux4_v - xa.dbl();
  Fq aux5_v = aux3_v * (xa - xd_v);
  Fq yd_v = aux5_v - ya;

  const Fq two = Fq::from_u64(2), three = Fq::from_u64(3);
  Var aux1 = cs.alloc(aux1_v);
  cs.enforce(Lc::term(a.y, two).add(a.inf, one), aux1, Lc(kOne) - Lc(a.inf));
  Var aux2 = cs.alloc(aux2_v);
  cs.enforce(a.x, a.x, aux2);
  Var aux3 = cs.alloc(aux3_v);
  cs.enforce(Lc::term(aux2, three).add(kOne, alpha), aux1, aux3);
  Var aux4 = cs.alloc(aux4_v);
  cs.enforce(aux3, aux3, aux4);
  CircuitPoint d;
  d.inf = a.inf;
  d.x = cs.alloc(xd_v);
  cs.enforce(Lc(aux4).add(a.x, -two), kOne, d.x);
  Var aux5 = cs.alloc(aux5_v);
  cs.enforce(aux3, Lc(a.x) - Lc(d.x), aux5);
  d.y = cs.alloc(yd_v);
  cs.enforce(Lc(aux5) - Lc(a.y), kOne, d.y);
  return d;
}

}  // namespace

CircuitPoint pt_add_gadget(ConstraintSystem& cs, const E2Params&, const CircuitPoint& a, const CircuitPoint& b,
                           const CircuitPoint* out) {
  ++cs.stats().n_point_adds;
  return add_impl(cs, a, b, out);
}

CircuitPoint pt_dbl_gadget(ConstraintSystem& cs, const E2Params& curve, const CircuitPoint& a) {
  return dbl_impl(cs, curve.a, a);
}

CircuitPoint pt_mul_gadget(ConstraintSystem& cs, const E2Params& curve, const Lc& w, const CircuitPoint& p,
                           unsigned n_bits, const CircuitPoint* out) {
  ++cs.stats().n_point_mults;
  const Fq one = Fq::one();
  auto bits = revbin_gadget(cs, w, n_bits);

  // A_0 = P, B_0 = infinity
  CircuitPoint acc_a;
  acc_a.x = cs.alloc(cs.value(p.x));
  cs.enforce(p.x, kOne, acc_a.x);
  acc_a.y = cs.alloc(cs.value(p.y));
  cs.enforce(p.y, kOne, acc_a.y);
  acc_a.inf = cs.alloc(cs.value(p.inf));
  cs.enforce(p.inf, kOne, acc_a.inf);
  cs.enforce(acc_a.inf, acc_a.inf, acc_a.inf);
  CircuitPoint acc_b;
  acc_b.x = cs.alloc(Fq::zero());
  cs.enforce(acc_b.x, kOne, Lc());
  acc_b.y = cs.alloc(Fq::zero());
  cs.enforce(acc_b.y, kOne, Lc());
  acc_b.inf = cs.alloc(one);
  cs.enforce(acc_b.inf, kOne, kOne);

  for (unsigned i = 0; i < n_bits; ++i) {
    CircuitPoint sum = add_impl(cs, acc_b, acc_a, nullptr);
    CircuitPoint dbl = dbl_impl(cs, curve.a, acc_a);
    const Var v = bits[i];
    const bool last = i + 1 == n_bits;
    const Fq vv = cs.value(v);
    CircuitPoint next;
    for (Var CircuitPoint::*f : {&CircuitPoint::x, &CircuitPoint::y, &CircuitPoint::inf}) {
      Fq t_v = vv * cs.value(sum.*f);
      Fq u_v = (one - vv) * cs.value(acc_b.*f);
      Var t = cs.alloc(t_v);
      cs.enforce(v, sum.*f, t);
      Var u = cs.alloc(u_v);
      cs.enforce(Lc(kOne) - Lc(v), acc_b.*f, u);
      next.*f = (last && out) ? out->*f : cs.alloc(t_v + u_v);
      cs.enforce(Lc(t) + Lc(u), kOne, next.*f);
    }
    acc_b = next;
    acc_a = dbl;
  }
  if (n_bits == 0 && out) {
    // degenerate width: pin the output to infinity directly
    cs.enforce(out->x, kOne, Lc());
    cs.enforce(out->y, kOne, Lc());
    cs.enforce(out->inf, kOne, kOne);
    return *out;
  }
  return acc_b;
}

// ---------------------------------------------------------------------------
// Accounting

ConstraintEstimate estimate_baseline_noCE(const GadgetStats& stats) {
  ConstraintEstimate e;
  e.point_mult_constraints = stats.n_point_mults * e.per_mult;
  e.point_add_constraints = stats.n_point_adds * e.per_add;
  e.total = e.point_mult_constraints + e.point_add_constraints;
  return e;
}

std::string stats_json(const GadgetStats& vpin_stats, const GadgetStats& baseline_ops) {
  auto est = estimate_baseline_noCE(baseline_ops);
  nlohmann::json j = {
      {"point_mults", vpin_stats.n_point_mults},
      {"point_adds", vpin_stats.n_point_adds},
      {"constraints", embedded_constraints(vpin_stats.n_point_mults, vpin_stats.n_point_adds)},
      {"baseline_point_mults", baseline_ops.n_point_mults},
      {"baseline_point_adds", baseline_ops.n_point_adds},
      {"baseline_constraints", embedded_constraints(baseline_ops.n_point_mults, baseline_ops.n_point_adds)},
      {"baseline_noce_estimate", est.total},
  };
  return j.dump(2);
}

}  // namespace vpin::r1cs
