#include <gmpxx.h>

#include "doctest.h"
#include "vpin/field.hpp"
#include "vpin/util.hpp"

using namespace vpin;

namespace {

mpz_class to_mpz(const U256& a) {
  mpz_class z;
  mpz_import(z.get_mpz_t(), 4, -1, sizeof(std::uint64_t), 0, 0, a.data());
  return z;
}

template <class F>
mpz_class mod() {
  return to_mpz(F::P);
}

template <class F>
void check_against_gmp(std::uint64_t seed) {
  Rng rng(seed);
  mpz_class p = mod<F>();
  for (int i = 0; i < 300; ++i) {
    U256 ua = rng.scalar_below(F::P), ub = rng.scalar_below(F::P);
    F a = F::from_canonical(ua), b = F::from_canonical(ub);
    mpz_class za = to_mpz(ua), zb = to_mpz(ub);
    CHECK(to_mpz(a.to_u256()) == za);
    CHECK(to_mpz((a + b).to_u256()) == mpz_class((za + zb) % p));
    CHECK(to_mpz((a - b).to_u256()) == mpz_class(((za - zb) % p + p) % p));
    CHECK(to_mpz((a * b).to_u256()) == mpz_class((za * zb) % p));
    mpz_class inv;
    mpz_invert(inv.get_mpz_t(), za.get_mpz_t(), p.get_mpz_t());
    CHECK(to_mpz(a.inv().to_u256()) == inv);
    CHECK(a * a.inv() == F::one());
    F r;
    if (a.is_square()) {
      REQUIRE(a.sqrt(r));
      CHECK(r.sqr() == a);
    } else {
      CHECK_FALSE(a.sqrt(r));
    }
    mpz_class e = za, pw;
    mpz_powm(pw.get_mpz_t(), zb.get_mpz_t(), e.get_mpz_t(), p.get_mpz_t());
    CHECK(to_mpz(b.pow(ua).to_u256()) == pw);
  }
}

}  // namespace

TEST_CASE("field arithmetic agrees with GMP for all three moduli") {
  check_against_gmp<FeP1>(1);
  check_against_gmp<FeQ1>(2);
  check_against_gmp<FeQ2>(3);
}

TEST_CASE("moduli are the documented primes") {
  CHECK(to_mpz(FeP1::P) == (mpz_class(1) << 255) - 19);
  CHECK(to_mpz(FeQ1::P) == (mpz_class(1) << 252) + mpz_class("27742317777372353535851937790883648493"));
  CHECK(to_mpz(FeQ2::P) == (mpz_class(1) << 252) - mpz_class("124614587218531604318505012771651942947"));
  CHECK(mpz_probab_prime_p(to_mpz(FeQ2::P).get_mpz_t(), 30) > 0);
}

TEST_CASE("signed conversions round trip") {
  for (std::int64_t v : std::initializer_list<std::int64_t>{0, 1, -1, 123456789, -987654321, INT64_MAX, INT64_MIN}) {
    CHECK(FeQ1::from_i64(v).to_i128() == v);
    CHECK(FeQ2::from_i64(v).to_i128() == v);
  }
  __int128 big = (static_cast<__int128>(1) << 126) + 12345;
  CHECK(FeQ1::from_i128(big).to_i128() == big);
  CHECK(FeQ1::from_i128(-big).to_i128() == -big);
}

TEST_CASE("byte encoding and decimal parsing") {
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    FeQ1 a = FeQ1::from_canonical(rng.scalar_below(FeQ1::P));
    std::array<std::uint8_t, 32> b;
    a.to_be(b);
    FeQ1 back;
    REQUIRE(FeQ1::from_be(b, back));
    CHECK(back == a);
    CHECK(FeQ1::from_dec(a.to_dec()) == a);
  }
  std::array<std::uint8_t, 32> b;
  u256_to_be(FeQ1::P, b);
  FeQ1 x;
  CHECK_FALSE(FeQ1::from_be(b, x));
  CHECK_THROWS(FeQ1::from_dec("12a"));
}

TEST_CASE("batch inversion matches single inversions and skips zeros") {
  Rng rng(5);
  std::vector<FeP1> xs;
  for (int i = 0; i < 40; ++i) xs.push_back(i % 7 == 3 ? FeP1::zero() : FeP1::from_canonical(rng.scalar_below(FeP1::P)));
  auto ys = xs;
  batch_invert<FeP1>(ys);
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(ys[i] == xs[i].inv());
}
