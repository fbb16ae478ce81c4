#pragma once

#include <omp.h>

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vpin/field.hpp"

namespace vpin {

// Short Weierstrass y^2 = x^3 + a x + b. Infinity is flagged; its coordinates are kept at (0,0)
// because the circuit gadgets rely on that encoding.
template <class F>
struct AffinePoint {
  F x{}, y{};
  bool inf = true;

  static AffinePoint infinity() { return {}; }
  static AffinePoint of(const F& x, const F& y) { return {x, y, false}; }
  friend bool operator==(const AffinePoint& a, const AffinePoint& b) {
    if (a.inf || b.inf) return a.inf == b.inf;
    return a.x == b.x && a.y == b.y;
  }
};

template <class F>
struct CurveParams {
  std::string name;
  F a, b;
  U256 base_modulus{};
  U256 order{};
  U256 cofactor = u256(1);
  AffinePoint<F> g;
};

// E1: proof curve (Curve25519 in Weierstrass form) over p1, group order q1 * 8
// E2: cipher curve over q1, prime order q2
using E1Point = AffinePoint<FeP1>;
using E2Point = AffinePoint<FeQ1>;
using E1Params = CurveParams<FeP1>;
using E2Params = CurveParams<FeQ1>;

template <class F>
bool on_curve(const CurveParams<F>& c, const AffinePoint<F>& p) {
  if (p.inf) return true;
  return p.y.sqr() == (p.x.sqr() + c.a) * p.x + c.b;
}

template <class F>
AffinePoint<F> pt_neg(const AffinePoint<F>& p) {
  if (p.inf) return p;
  return AffinePoint<F>::of(p.x, -p.y);
}

template <class F>
AffinePoint<F> pt_double(const CurveParams<F>& c, const AffinePoint<F>& p) {
  if (p.inf || p.y.is_zero()) return AffinePoint<F>::infinity();
  F x2 = p.x.sqr();
  F lambda = (x2 + x2 + x2 + c.a) * (p.y + p.y).inv();
  F x3 = lambda.sqr() - p.x - p.x;
  F y3 = lambda * (p.x - x3) - p.y;
  return AffinePoint<F>::of(x3, y3);
}

template <class F>
AffinePoint<F> pt_add(const CurveParams<F>& c, const AffinePoint<F>& p, const AffinePoint<F>& q) {
  if (p.inf) return q;
  if (q.inf) return p;
  if (p.x == q.x) {
    if (p.y == q.y) return pt_double(c, p);
    return AffinePoint<F>::infinity();
  }
  F lambda = (q.y - p.y) * (q.x - p.x).inv();
  F x3 = lambda.sqr() - p.x - q.x;
  F y3 = lambda * (p.x - x3) - p.y;
  return AffinePoint<F>::of(x3, y3);
}

template <class F>
AffinePoint<F> pt_sub(const CurveParams<F>& c, const AffinePoint<F>& p, const AffinePoint<F>& q) {
  return pt_add(c, p, pt_neg(q));
}

// Plain affine double-and-add, most significant bit first. Slow; the reference for everything faster.
template <class F>
AffinePoint<F> pt_mul_affine(const CurveParams<F>& c, const U256& k, const AffinePoint<F>& p) {
  AffinePoint<F> r;
  for (int i = static_cast<int>(bit_length(k)) - 1; i >= 0; --i) {
    r = pt_double(c, r);
    if (bit(k, i)) r = pt_add(c, r, p);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Jacobian arithmetic: (X, Y, Z) ~ (X/Z^2, Y/Z^3); Z == 0 is infinity.

template <class F>
struct JacPoint {
  F X, Y, Z;
  static JacPoint infinity() { return {F::one(), F::one(), F::zero()}; }
  static JacPoint from(const AffinePoint<F>& p) {
    if (p.inf) return infinity();
    return {p.x, p.y, F::one()};
  }
  bool is_inf() const { return Z.is_zero(); }
};

template <class F>
JacPoint<F> jac_double(const CurveParams<F>& c, const JacPoint<F>& p) {
  if (p.is_inf() || p.Y.is_zero()) return JacPoint<F>::infinity();
  F xx = p.X.sqr();
  F yy = p.Y.sqr();
  F yyyy = yy.sqr();
  F zz = p.Z.sqr();
  F s = ((p.X + yy).sqr() - xx - yyyy).dbl();
  F m = xx + xx + xx + c.a * zz.sqr();
  F t = m.sqr() - s.dbl();
  JacPoint<F> r;
  r.X = t;
  r.Y = m * (s - t) - yyyy.dbl().dbl().dbl();
  r.Z = (p.Y + p.Z).sqr() - yy - zz;
  return r;
}

// p + q with q affine
template <class F>
JacPoint<F> jac_add_mixed(const CurveParams<F>& c, const JacPoint<F>& p, const AffinePoint<F>& q) {
  if (q.inf) return p;
  if (p.is_inf()) return JacPoint<F>::from(q);
  F z1z1 = p.Z.sqr();
  F u2 = q.x * z1z1;
  F s2 = q.y * p.Z * z1z1;
  F h = u2 - p.X;
  F r = (s2 - p.Y).dbl();
  if (h.is_zero()) {
    if (r.is_zero()) return jac_double(c, p);
    return JacPoint<F>::infinity();
  }
  F hh = h.sqr();
  F i = hh.dbl().dbl();
  F j = h * i;
  F v = p.X * i;
  JacPoint<F> out;
  out.X = r.sqr() - j - v.dbl();
  out.Y = r * (v - out.X) - (p.Y * j).dbl();
  out.Z = (p.Z + h).sqr() - z1z1 - hh;
  return out;
}

template <class F>
JacPoint<F> jac_add(const CurveParams<F>& c, const JacPoint<F>& p, const JacPoint<F>& q) {
  if (p.is_inf()) return q;
  if (q.is_inf()) return p;
  F z1z1 = p.Z.sqr();
  F z2z2 = q.Z.sqr();
  F u1 = p.X * z2z2;
  F u2 = q.X * z1z1;
  F s1 = p.Y * q.Z * z2z2;
  F s2 = q.Y * p.Z * z1z1;
  F h = u2 - u1;
  F r = (s2 - s1).dbl();
  if (h.is_zero()) {
    if (r.is_zero()) return jac_double(c, p);
    return JacPoint<F>::infinity();
  }
  F i = h.dbl().sqr();
  F j = h * i;
  F v = u1 * i;
  JacPoint<F> out;
  out.X = r.sqr() - j - v.dbl();
  out.Y = r * (v - out.X) - (s1 * j).dbl();
  out.Z = ((p.Z + q.Z).sqr() - z1z1 - z2z2) * h;
  return out;
}

template <class F>
JacPoint<F> jac_neg(const JacPoint<F>& p) {
  return {p.X, -p.Y, p.Z};
}

template <class F>
AffinePoint<F> to_affine(const JacPoint<F>& p) {
  if (p.is_inf()) return AffinePoint<F>::infinity();
  F zi = p.Z.inv();
  F zi2 = zi.sqr();
  return AffinePoint<F>::of(p.X * zi2, p.Y * zi2 * zi);
}

// One field inversion for the whole batch.
template <class F>
std::vector<AffinePoint<F>> batch_to_affine(std::span<const JacPoint<F>> ps) {
  std::vector<F> zs(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) zs[i] = ps[i].Z;
  batch_invert<F>(zs);
  std::vector<AffinePoint<F>> out(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ps[i].is_inf()) continue;
    F zi2 = zs[i].sqr();
    out[i] = AffinePoint<F>::of(ps[i].X * zi2, ps[i].Y * zi2 * zs[i]);
  }
  return out;
}

// Variable-base multiplication, width-4 signed windows over affine odd multiples.
template <class F>
JacPoint<F> jac_mul(const CurveParams<F>& c, const U256& k, const AffinePoint<F>& p) {
  if (p.inf || is_zero(k)) return JacPoint<F>::infinity();
  constexpr int W = 4;
  std::array<JacPoint<F>, 1 << (W - 2)> odd_j;  // P, 3P, 5P, ..., 15P
  odd_j[0] = JacPoint<F>::from(p);
  JacPoint<F> p2 = jac_double(c, odd_j[0]);
  for (std::size_t i = 1; i < odd_j.size(); ++i) odd_j[i] = jac_add(c, odd_j[i - 1], p2);
  auto odd = batch_to_affine<F>(odd_j);

  // wNAF digits
  std::array<std::int8_t, 258> naf{};
  U256 e = k;
  int len = 0;
  while (!is_zero(e)) {
    int d = 0;
    if (e[0] & 1) {
      d = static_cast<int>(e[0] & ((1 << W) - 1));
      if (d >= (1 << (W - 1))) d -= (1 << W);
      if (d > 0) {
        sub_from(e, u256(static_cast<std::uint64_t>(d)));
      } else {
        add_to(e, u256(static_cast<std::uint64_t>(-d)));
      }
    }
    naf[len++] = static_cast<std::int8_t>(d);
    e = shr(e, 1);
  }
  JacPoint<F> r = JacPoint<F>::infinity();
  for (int i = len - 1; i >= 0; --i) {
    r = jac_double(c, r);
    int d = naf[i];
    if (d > 0) r = jac_add_mixed(c, r, odd[d / 2]);
    if (d < 0) r = jac_add_mixed(c, r, pt_neg(odd[(-d) / 2]));
  }
  return r;
}

template <class F>
AffinePoint<F> pt_mul(const CurveParams<F>& c, const U256& k, const AffinePoint<F>& p) {
  return to_affine(jac_mul(c, k, p));
}

// signed small scalar
template <class F>
JacPoint<F> jac_mul_i64(const CurveParams<F>& c, std::int64_t k, const AffinePoint<F>& p) {
  if (k >= 0) return jac_mul(c, u256(static_cast<std::uint64_t>(k)), p);
  return jac_neg(jac_mul(c, u256(static_cast<std::uint64_t>(-(k + 1)) + 1), p));
}

// Fixed-base comb: table[w][j] = (j+1) * 2^(8w) * B for 32 byte-windows.
template <class F>
class FixedBaseTable {
 public:
  FixedBaseTable() = default;
  FixedBaseTable(const CurveParams<F>& c, const AffinePoint<F>& base) : c_(&c) {
    std::vector<JacPoint<F>> all;
    all.reserve(32 * 255);
    JacPoint<F> b = JacPoint<F>::from(base);
    for (int w = 0; w < 32; ++w) {
      JacPoint<F> acc = b;
      for (int j = 0; j < 255; ++j) {
        all.push_back(acc);
        acc = jac_add(c, acc, b);
      }
      for (int s = 0; s < 8; ++s) b = jac_double(c, b);
    }
    table_ = batch_to_affine<F>(all);
  }
  bool empty() const { return table_.empty(); }

  JacPoint<F> mul(const U256& k) const {
    JacPoint<F> r = JacPoint<F>::infinity();
    for (int w = 0; w < 32; ++w) {
      unsigned byte = static_cast<unsigned>((k[w / 8] >> (8 * (w % 8))) & 0xff);
      if (byte) r = jac_add_mixed(*c_, r, table_[w * 255 + byte - 1]);
    }
    return r;
  }
  JacPoint<F> mul_i64(std::int64_t k) const {
    if (k >= 0) return mul(u256(static_cast<std::uint64_t>(k)));
    return jac_neg(mul(u256(static_cast<std::uint64_t>(-(k + 1)) + 1)));
  }

 private:
  const CurveParams<F>* c_ = nullptr;
  std::vector<AffinePoint<F>> table_;
};

// Straus interleaving for many small signed scalars sharing one doubling chain. Each point comes
// with its odd multiples P, 3P, ..., 15P in affine form.
template <class F>
using OddTable = std::array<AffinePoint<F>, 8>;

template <class F>
std::vector<OddTable<F>> odd_tables(const CurveParams<F>& c, std::span<const AffinePoint<F>> pts) {
  std::vector<JacPoint<F>> all;
  all.reserve(pts.size() * 8);
  for (const auto& p : pts) {
    JacPoint<F> base = JacPoint<F>::from(p);
    JacPoint<F> p2 = jac_double(c, base);
    JacPoint<F> acc = base;
    for (int i = 0; i < 8; ++i) {
      all.push_back(acc);
      acc = jac_add(c, acc, p2);
    }
  }
  auto aff = batch_to_affine<F>(all);
  std::vector<OddTable<F>> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (int j = 0; j < 8; ++j) out[i][j] = aff[i * 8 + j];
  }
  return out;
}

template <class F>
JacPoint<F> straus_i64(const CurveParams<F>& c, std::span<const OddTable<F>* const> tabs,
                       std::span<const std::int64_t> ks) {
  constexpr int W = 5;
  const std::size_t n = ks.size();
  std::vector<std::array<std::int8_t, 66>> naf(n);
  int len = 0;
  for (std::size_t t = 0; t < n; ++t) {
    naf[t].fill(0);
    std::int64_t k = ks[t];
    bool neg = k < 0;
    unsigned __int128 e = neg ? static_cast<unsigned __int128>(-static_cast<__int128>(k)) : static_cast<unsigned __int128>(k);
    int i = 0;
    while (e) {
      int d = 0;
      if (e & 1) {
        d = static_cast<int>(e & ((1 << W) - 1));
        if (d >= (1 << (W - 1))) d -= (1 << W);
        if (d > 0) {
          e -= static_cast<unsigned>(d);
        } else {
          e += static_cast<unsigned>(-d);
        }
      }
      naf[t][i++] = static_cast<std::int8_t>(neg ? -d : d);
      e >>= 1;
    }
    len = std::max(len, i);
  }
  JacPoint<F> r = JacPoint<F>::infinity();
  for (int i = len - 1; i >= 0; --i) {
    r = jac_double(c, r);
    for (std::size_t t = 0; t < n; ++t) {
      int d = naf[t][i];
      if (d > 0) r = jac_add_mixed(c, r, (*tabs[t])[d / 2]);
      if (d < 0) r = jac_add_mixed(c, r, pt_neg((*tabs[t])[(-d) / 2]));
    }
  }
  return r;
}

// Pippenger bucket MSM; scalars are plain integers (not reduced by the caller's group order).
template <class F>
JacPoint<F> msm(const CurveParams<F>& c, std::span<const AffinePoint<F>> points, std::span<const U256> scalars) {
  std::size_t n = points.size();
  if (n == 0) return JacPoint<F>::infinity();
  if (n < 8) {
    JacPoint<F> r = JacPoint<F>::infinity();
    for (std::size_t i = 0; i < n; ++i) r = jac_add(c, r, jac_mul(c, scalars[i], points[i]));
    return r;
  }
  unsigned maxbits = 0;
  for (auto& s : scalars) maxbits = std::max(maxbits, bit_length(s));
  if (maxbits == 0) return JacPoint<F>::infinity();
  unsigned w = 2;
  while ((1ull << (w + 1)) < n / 2 && w < 16) ++w;
  std::vector<JacPoint<F>> buckets(std::size_t{1} << w);
  JacPoint<F> total = JacPoint<F>::infinity();
  int windows = static_cast<int>((maxbits + w - 1) / w);
  for (int win = windows - 1; win >= 0; --win) {
    for (unsigned s = 0; s < w; ++s) total = jac_double(c, total);
    std::fill(buckets.begin(), buckets.end(), JacPoint<F>::infinity());
    unsigned shift = static_cast<unsigned>(win) * w;
    for (std::size_t i = 0; i < n; ++i) {
      U256 t = shr(scalars[i], shift);
      std::uint64_t idx = t[0] & ((1ull << w) - 1);
      if (idx) buckets[idx] = jac_add_mixed(c, buckets[idx], points[i]);
    }
    JacPoint<F> running = JacPoint<F>::infinity();
    JacPoint<F> sum = JacPoint<F>::infinity();
    for (std::size_t b = buckets.size() - 1; b >= 1; --b) {
      running = jac_add(c, running, buckets[b]);
      sum = jac_add(c, sum, running);
    }
    total = jac_add(c, total, sum);
  }
  return total;
}

// Splits the points across OpenMP threads, one Pippenger run per chunk.
template <class F>
JacPoint<F> msm_parallel(const CurveParams<F>& c, std::span<const AffinePoint<F>> points,
                         std::span<const U256> scalars) {
  const std::size_t n = points.size();
  const int chunks = std::max(1, std::min(omp_get_max_threads(), static_cast<int>(n / 1024)));
  if (chunks == 1) return msm(c, points, scalars);
  std::vector<JacPoint<F>> part(chunks, JacPoint<F>::infinity());
#pragma omp parallel for schedule(static, 1)
  for (int t = 0; t < chunks; ++t) {
    std::size_t lo = n * t / chunks, hi = n * (t + 1) / chunks;
    part[t] = msm(c, points.subspan(lo, hi - lo), scalars.subspan(lo, hi - lo));
  }
  JacPoint<F> acc = JacPoint<F>::infinity();
  for (auto& p : part) acc = jac_add(c, acc, p);
  return acc;
}

// ---------------------------------------------------------------------------
// Encoding, decoding and parameter handling

using PointBytes = std::array<std::uint8_t, 33>;

enum class DecodeError { none, invalid_prefix, x_out_of_range, not_on_curve, not_in_subgroup };
const char* to_string(DecodeError e);

template <class F>
PointBytes encode_point(const AffinePoint<F>& p) {
  PointBytes out{};
  if (p.inf) return out;
  out[0] = p.y.is_odd() ? 0x03 : 0x02;
  p.x.to_be(std::span<std::uint8_t, 32>(out.data() + 1, 32));
  return out;
}

template <class F>
DecodeError decode_point(const CurveParams<F>& c, std::span<const std::uint8_t, 33> in, AffinePoint<F>& out,
                         bool check_subgroup = false) {
  if (in[0] == 0x00) {
    for (std::size_t i = 1; i < 33; ++i) {
      if (in[i] != 0) return DecodeError::invalid_prefix;
    }
    out = AffinePoint<F>::infinity();
    return DecodeError::none;
  }
  if (in[0] != 0x02 && in[0] != 0x03) return DecodeError::invalid_prefix;
  F x;
  if (!F::from_be(std::span<const std::uint8_t, 32>(in.data() + 1, 32), x)) return DecodeError::x_out_of_range;
  F rhs = (x.sqr() + c.a) * x + c.b;
  F y;
  if (!rhs.sqrt(y)) return DecodeError::not_on_curve;
  if (y.is_odd() != (in[0] == 0x03)) y = -y;
  if (y.is_zero() && in[0] == 0x03) return DecodeError::not_on_curve;
  AffinePoint<F> p = AffinePoint<F>::of(x, y);
  if (check_subgroup && !jac_mul(c, c.order, p).is_inf()) return DecodeError::not_in_subgroup;
  out = p;
  return DecodeError::none;
}

template <class F>
std::string point_to_string(const AffinePoint<F>& p) {
  if (p.inf) return "inf";
  return "(" + p.x.to_dec() + ", " + p.y.to_dec() + ")";
}

struct ValidationReport {
  std::vector<std::string> failures;  // names of failed checks; empty when valid
  bool ok() const { return failures.empty(); }
};

bool is_probable_prime(const U256& n);

template <class F>
ValidationReport validate_params(const CurveParams<F>& c) {
  ValidationReport r;
  if (c.base_modulus != F::P) r.failures.push_back("base_modulus");
  F disc = F::from_u64(4) * c.a.sqr() * c.a + F::from_u64(27) * c.b.sqr();
  if (disc.is_zero()) r.failures.push_back("discriminant");
  if (!is_probable_prime(c.order)) r.failures.push_back("order_prime");
  if (c.g.inf || !on_curve(c, c.g)) {
    r.failures.push_back("generator_on_curve");
  } else if (!jac_mul(c, c.order, c.g).is_inf()) {
    r.failures.push_back("generator_order");
  }
  return r;
}

// Structural embedding: the cipher curve's coordinates live in the proof curve's scalar field.
inline bool check_embedding(const E1Params& e1, const E2Params& e2) { return e2.base_modulus == e1.order; }

E1Params e1_params_from_json(const std::string& text);
E2Params e2_params_from_json(const std::string& text);
std::string params_to_json(const E1Params& c);
std::string params_to_json(const E2Params& c);

// Built-in constants, identical to data/e1_curve25519.json and data/e2_embedded.json
const E1Params& e1_default();
const E2Params& e2_default();

}  // namespace vpin
