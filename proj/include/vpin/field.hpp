#pragma once

#include <cstdint>
#include <stdexcept>
#include <span>
#include <string>
#include <vector>

#include "vpin/bigint.hpp"

namespace vpin {

namespace detail {

constexpr std::uint64_t neg_inv64(std::uint64_t p0) {
  std::uint64_t x = 1;
  for (int i = 0; i < 7; ++i) x *= 2 - p0 * x;  // Newton, doubles bits each step
  return ~x + 1;
}

constexpr U256 r_mod(const U256& p, unsigned doublings) {
  U256 r = u256(1);
  for (unsigned i = 0; i < doublings; ++i) {
    std::uint64_t c = add_to(r, r);
    if (c || cmp(r, p) >= 0) sub_from(r, p);
  }
  return r;
}

// GMP-backed helpers shared by all moduli
U256 invert_mod(const U256& a, const U256& p);  // a != 0, p prime

}  // namespace detail

template <class Tag>
class Fe {
 public:
  static constexpr U256 P = Tag::modulus;
  static constexpr std::uint64_t N0 = detail::neg_inv64(P[0]);
  static constexpr U256 R1 = detail::r_mod(P, 256);
  static constexpr U256 R2 = detail::r_mod(P, 512);
  static constexpr U256 R3 = detail::r_mod(P, 768);

  constexpr Fe() : v_{} {}

  static constexpr Fe zero() { return Fe(); }
  static constexpr Fe one() { return raw(R1); }
  static constexpr Fe raw(const U256& mont) {
    Fe f;
    f.v_ = mont;
    return f;
  }

  // x must be < P
  static constexpr Fe from_canonical(const U256& x) { return raw(mont_mul(x, R2)); }
  static Fe from_u256_reduce(const U256& x) {
    U256 y = x;
    while (cmp(y, P) >= 0) sub_from(y, P);
    return from_canonical(y);
  }
  static constexpr Fe from_u64(std::uint64_t x) { return from_canonical(u256(x)); }
  static constexpr Fe from_i64(std::int64_t x) {
    if (x >= 0) return from_u64(static_cast<std::uint64_t>(x));
    return -from_u64(static_cast<std::uint64_t>(-(x + 1)) + 1);
  }
  static Fe from_i128(__int128 x) {
    bool neg = x < 0;
    unsigned __int128 m = neg ? static_cast<unsigned __int128>(-(x + 1)) + 1 : static_cast<unsigned __int128>(x);
    Fe f = from_canonical({static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(m >> 64), 0, 0});
    return neg ? -f : f;
  }
  static Fe from_dec(std::string_view s) {
    U256 x = u256_from_dec(s);
    if (cmp(x, P) >= 0) throw std::invalid_argument("field element out of range");
    return from_canonical(x);
  }
  // false if the 32 bytes encode a value >= P
  static bool from_be(std::span<const std::uint8_t, 32> b, Fe& out) {
    U256 x = u256_from_be(b);
    if (cmp(x, P) >= 0) return false;
    out = from_canonical(x);
    return true;
  }

  constexpr U256 to_u256() const { return mont_mul(v_, u256(1)); }
  std::string to_dec() const { return u256_to_dec(to_u256()); }
  void to_be(std::span<std::uint8_t, 32> out) const { u256_to_be(to_u256(), out); }
  constexpr const U256& mont() const { return v_; }

  constexpr bool is_zero() const { return vpin::is_zero(v_); }
  bool is_odd() const { return to_u256()[0] & 1; }

  // signed view: values above P/2 are negative. Caller guarantees |x| < 2^127.
  __int128 to_i128() const {
    U256 x = to_u256();
    if (x[2] == 0 && x[3] == 0 && !(x[1] >> 63)) {
      return static_cast<__int128>((static_cast<unsigned __int128>(x[1]) << 64) | x[0]);
    }
    U256 n = (-*this).to_u256();
    return -static_cast<__int128>((static_cast<unsigned __int128>(n[1]) << 64) | n[0]);
  }

  constexpr friend bool operator==(const Fe& a, const Fe& b) { return a.v_ == b.v_; }

  constexpr Fe operator+(const Fe& o) const {
    Fe r = *this;
    std::uint64_t c = add_to(r.v_, o.v_);
    if (c || cmp(r.v_, P) >= 0) sub_from(r.v_, P);
    return r;
  }
  constexpr Fe operator-(const Fe& o) const {
    Fe r = *this;
    if (sub_from(r.v_, o.v_)) add_to(r.v_, P);
    return r;
  }
  constexpr Fe operator-() const { return Fe() - *this; }
  constexpr Fe operator*(const Fe& o) const { return raw(mont_mul(v_, o.v_)); }
  Fe& operator+=(const Fe& o) { return *this = *this + o; }
  Fe& operator-=(const Fe& o) { return *this = *this - o; }
  Fe& operator*=(const Fe& o) { return *this = *this * o; }

  constexpr Fe sqr() const { return raw(mont_mul(v_, v_)); }
  Fe dbl() const { return *this + *this; }

  Fe pow(const U256& e) const {
    Fe r = one();
    for (int i = static_cast<int>(bit_length(e)) - 1; i >= 0; --i) {
      r = r.sqr();
      if (bit(e, i)) r = r * *this;
    }
    return r;
  }

  // zero maps to zero
  Fe inv() const {
    if (is_zero()) return Fe();
    // v = aR; invert the residue then fix the Montgomery factor
    U256 t = detail::invert_mod(v_, P);
    return raw(mont_mul(t, R3));
  }

  bool is_square() const {
    if (is_zero()) return true;
    U256 e = P;
    sub_from(e, u256(1));
    e = shr(e, 1);
    return pow(e) == one();
  }

  // Tonelli-Shanks; returns false for non-residues
  bool sqrt(Fe& out) const {
    if (is_zero()) {
      out = Fe();
      return true;
    }
    if (!is_square()) return false;
    U256 q = P;
    sub_from(q, u256(1));
    unsigned s = 0;
    while (!(q[0] & 1)) {
      q = shr(q, 1);
      ++s;
    }
    Fe z = from_u64(2);
    while (z.is_square()) z += one();
    Fe c = z.pow(q);
    U256 q1 = q;
    add_to(q1, u256(1));
    Fe x = pow(shr(q1, 1));
    Fe t = pow(q);
    unsigned m = s;
    while (!(t == one())) {
      unsigned i = 0;
      Fe tt = t;
      while (!(tt == one())) {
        tt = tt.sqr();
        ++i;
      }
      Fe b = c;
      for (unsigned j = 0; j + i + 1 < m; ++j) b = b.sqr();
      x *= b;
      c = b.sqr();
      t *= c;
      m = i;
    }
    out = x;
    return true;
  }

 private:
  static constexpr U256 mont_mul(const U256& a, const U256& b) {
    std::uint64_t t[6] = {0, 0, 0, 0, 0, 0};
    for (int i = 0; i < 4; ++i) {
      unsigned __int128 c = 0;
      for (int j = 0; j < 4; ++j) {
        c += static_cast<unsigned __int128>(a[j]) * b[i] + t[j];
        t[j] = static_cast<std::uint64_t>(c);
        c >>= 64;
      }
      c += t[4];
      t[4] = static_cast<std::uint64_t>(c);
      t[5] = static_cast<std::uint64_t>(c >> 64);

      std::uint64_t m = t[0] * N0;
      c = static_cast<unsigned __int128>(m) * P[0] + t[0];
      c >>= 64;
      for (int j = 1; j < 4; ++j) {
        c += static_cast<unsigned __int128>(m) * P[j] + t[j];
        t[j - 1] = static_cast<std::uint64_t>(c);
        c >>= 64;
      }
      c += t[4];
      t[3] = static_cast<std::uint64_t>(c);
      t[4] = t[5] + static_cast<std::uint64_t>(c >> 64);
    }
    U256 r{t[0], t[1], t[2], t[3]};
    if (t[4] || cmp(r, P) >= 0) sub_from(r, P);
    return r;
  }

  U256 v_;
};

// Montgomery batch inversion; zeros stay zero
template <class F>
void batch_invert(std::span<F> xs) {
  std::vector<F> prefix(xs.size());
  F acc = F::one();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    prefix[i] = acc;
    if (!xs[i].is_zero()) acc *= xs[i];
  }
  F inv = acc.inv();
  for (std::size_t i = xs.size(); i-- > 0;) {
    if (xs[i].is_zero()) continue;
    F next = inv * xs[i];
    xs[i] = inv * prefix[i];
    inv = next;
  }
}

// 2^255 - 19, base field of E1
struct TagP1 {
  static constexpr U256 modulus = {0xffffffffffffffedULL, 0xffffffffffffffffULL, 0xffffffffffffffffULL,
                                   0x7fffffffffffffffULL};
  static constexpr const char* name = "p1";
};
// 2^252 + 27742317777372353535851937790883648493: order of E1, base field of E2
struct TagQ1 {
  static constexpr U256 modulus = {0x5812631a5cf5d3edULL, 0x14def9dea2f79cd6ULL, 0x0000000000000000ULL,
                                   0x1000000000000000ULL};
  static constexpr const char* name = "q1";
};
// 2^252 - 124614587218531604318505012771651942947: order of E2
struct TagQ2 {
  static constexpr U256 modulus = {0x8805b0ecdfee85ddULL, 0xa2401a7ec4cc5599ULL, 0xffffffffffffffffULL,
                                   0x0fffffffffffffffULL};
  static constexpr const char* name = "q2";
};

using FeP1 = Fe<TagP1>;
using FeQ1 = Fe<TagQ1>;
using FeQ2 = Fe<TagQ2>;

}  // namespace vpin
