#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vpin/curve.hpp"

namespace vpin::r1cs {

using Fq = FeQ1;  // circuit field; E2 coordinates live here natively

struct Var {
  std::uint32_t idx = 0;
  friend bool operator==(Var, Var) = default;
};
inline constexpr Var kOne{0};

struct Term {
  std::uint32_t var;
  Fq coeff;
};

// Sparse linear combination with a few terms stored inline.
class Lc {
 public:
  Lc() = default;
  Lc(Var v) { push(v.idx, Fq::one()); }  // NOLINT: implicit on purpose
  static Lc constant(const Fq& c) {
    Lc l;
    l.push(kOne.idx, c);
    return l;
  }
  static Lc term(Var v, const Fq& c) {
    Lc l;
    l.push(v.idx, c);
    return l;
  }

  Lc& add(Var v, const Fq& c) {
    push(v.idx, c);
    return *this;
  }
  Lc& add(const Lc& o, const Fq& scale);
  Lc operator+(const Lc& o) const;
  Lc operator-(const Lc& o) const;

  std::size_t size() const { return n_ <= kInline ? n_ : heap_.size(); }
  const Term& operator[](std::size_t i) const { return n_ <= kInline ? inline_[i] : heap_[i]; }

 private:
  static constexpr std::size_t kInline = 6;
  void push(std::uint32_t var, const Fq& c);
  Term inline_[kInline];
  std::size_t n_ = 0;
  std::vector<Term> heap_;
};

class GadgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GadgetStats {
  std::uint64_t n_constraints = 0;
  std::uint64_t n_vars = 0;
  std::uint64_t n_point_mults = 0;
  std::uint64_t n_point_adds = 0;
};

enum class VarKind : std::uint8_t { one, pub, committed, priv };

// R1CS over q1. Store mode keeps every row for later checking and dumping. Stream mode checks each
// row as it is emitted and keeps only the first violation, which is how the protocol circuits
// (millions of rows) are proved and verified without materializing them.
class ConstraintSystem {
 public:
  enum class Mode { store, stream };
  explicit ConstraintSystem(Mode mode = Mode::store);

  Var alloc(const Fq& value) { return alloc_kind(value, VarKind::priv, 0); }
  Var alloc_public(const Fq& value) { return alloc_kind(value, VarKind::pub, 0); }
  Var alloc_committed(std::uint32_t slice, const Fq& value) { return alloc_kind(value, VarKind::committed, slice); }

  void enforce(const Lc& a, const Lc& b, const Lc& c);

  const Fq& value(Var v) const { return values_[v.idx]; }
  void set_value(Var v, const Fq& x) { values_[v.idx] = x; }  // for mutation tests
  Fq eval(const Lc& l) const;

  Mode mode() const { return mode_; }
  std::size_t num_vars() const { return values_.size(); }
  std::size_t num_constraints() const { return n_rows_; }
  VarKind kind(Var v) const { return kinds_[v.idx]; }
  std::vector<Var> public_vars() const;
  std::vector<Fq> public_values() const;
  std::vector<Var> committed_vars(std::uint32_t slice) const;

  // Row-by-row check. Store mode re-evaluates all rows (OpenMP-parallel); stream mode reports the
  // violations seen at emission time.
  bool is_satisfied() const;
  bool is_satisfied_serial() const;
  std::optional<std::size_t> first_violation() const;

  GadgetStats& stats() { return stats_; }
  const GadgetStats& stats() const { return stats_; }

  void dump(std::ostream& os) const;  // store mode only

 private:
  Var alloc_kind(const Fq& value, VarKind kind, std::uint32_t slice);
  bool row_holds(std::size_t r) const;
  Fq eval_range(std::size_t lo, std::size_t hi) const;

  Mode mode_;
  std::vector<Fq> values_;
  std::vector<VarKind> kinds_;
  std::vector<std::uint32_t> slices_;
  // store mode: terms of row r, lc k at terms_[offsets_[3r+k] .. offsets_[3r+k+1])
  std::vector<std::uint32_t> term_vars_;
  std::vector<Fq> term_coeffs_;
  std::vector<std::size_t> offsets_;
  std::size_t n_rows_ = 0;
  std::optional<std::size_t> first_bad_;
  GadgetStats stats_;
};

struct CircuitPoint {
  Var x, y, inf;
};

// Allocates a point. Public points are pinned by the verifier's own public input vector, so no
// well-formedness rows are emitted for them.
CircuitPoint alloc_point(ConstraintSystem& cs, const E2Point& p, VarKind kind = VarKind::priv);
E2Point point_value(const ConstraintSystem& cs, const CircuitPoint& p);

// v[i]^2 = v[i] for each bit, then sum v[i] 2^i = a. LSB at index 0. 129 rows for n = 128.
std::vector<Var> revbin_gadget(ConstraintSystem& cs, const Lc& a, unsigned n_bits);

// C = A + B: the six chord relations plus the infinity multiplexer; 10 rows.
// When out is given the result is constrained into those variables instead of fresh ones.
CircuitPoint pt_add_gadget(ConstraintSystem& cs, const E2Params& curve, const CircuitPoint& a, const CircuitPoint& b,
                           const CircuitPoint* out = nullptr);
// D = 2A; 7 rows. D shares A's infinity indicator.
CircuitPoint pt_dbl_gadget(ConstraintSystem& cs, const E2Params& curve, const CircuitPoint& a);
// Q = w P by index-increasing double-and-add; 129 + 7 + 26 n rows (3464 for n = 128).
CircuitPoint pt_mul_gadget(ConstraintSystem& cs, const E2Params& curve, const Lc& w, const CircuitPoint& p,
                           unsigned n_bits = 128, const CircuitPoint* out = nullptr);

// Pinned per-gadget row counts
constexpr std::uint64_t kPtAddRows = 10;
constexpr std::uint64_t kPtDblRows = 7;
constexpr std::uint64_t pt_mul_rows(unsigned n_bits) { return (n_bits + 1) + 7 + 26ull * n_bits; }
constexpr std::uint64_t kPtMulRows = pt_mul_rows(128);

// Non-native (no curve embedding) figures
constexpr std::uint64_t kNoCeMulRows = 76834;
constexpr std::uint64_t kNoCeAddRows = 230;
constexpr std::uint64_t kNoCeDblRows = 161;

struct ConstraintEstimate {
  std::uint64_t point_mult_constraints = 0;
  std::uint64_t point_add_constraints = 0;
  std::uint64_t total = 0;
  std::uint64_t per_mult = kNoCeMulRows;
  std::uint64_t per_add = kNoCeAddRows;
  std::uint64_t per_double = kNoCeDblRows;
};

ConstraintEstimate estimate_baseline_noCE(const GadgetStats& stats);
// constraints with curve embedding for a given op mix
inline std::uint64_t embedded_constraints(std::uint64_t mults, std::uint64_t adds) {
  return mults * kPtMulRows + adds * kPtAddRows;
}

std::string stats_json(const GadgetStats& vpin_stats, const GadgetStats& baseline_ops);

}  // namespace vpin::r1cs
