#include <fstream>
#include <sstream>

#include "doctest.h"
#include "vpin/curve.hpp"
#include "vpin/util.hpp"

using namespace vpin;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

template <class F>
AffinePoint<F> random_point(const CurveParams<F>& c, Rng& rng) {
  return pt_mul(c, rng.scalar_below(c.order), c.g);
}

}  // namespace

TEST_CASE("published curve files load and validate") {
  auto e1 = e1_params_from_json(slurp(VPIN_DATA_DIR "/e1_curve25519.json"));
  auto e2 = e2_params_from_json(slurp(VPIN_DATA_DIR "/e2_embedded.json"));
  CHECK(validate_params(e1).ok());
  CHECK(validate_params(e2).ok());
  CHECK(check_embedding(e1, e2));
  CHECK(e1.g == e1_default().g);
  CHECK(e2.g == e2_default().g);
  CHECK(e1.a == e1_default().a);
  CHECK(e2.b == e2_default().b);
}

TEST_CASE("single-field perturbations fail validation") {
  const auto& base = e2_default();
  auto e = base;
  e.b += FeQ1::one();
  CHECK_FALSE(validate_params(e).ok());
  e = base;
  e.a += FeQ1::one();
  CHECK_FALSE(validate_params(e).ok());
  e = base;
  e.g.x += FeQ1::one();
  CHECK_FALSE(validate_params(e).ok());
  e = base;
  e.g.y += FeQ1::one();
  CHECK_FALSE(validate_params(e).ok());
  e = base;
  add_to(e.order, u256(2));
  CHECK_FALSE(validate_params(e).ok());
  e = base;
  add_to(e.base_modulus, u256(2));
  CHECK_FALSE(validate_params(e).ok());
  auto e1 = e1_default();
  e1.b += FeP1::one();
  CHECK_FALSE(validate_params(e1).ok());
}

TEST_CASE("embedding check detects a non-matching base field") {
  auto e2 = e2_default();
  CHECK(check_embedding(e1_default(), e2));
  add_to(e2.base_modulus, u256(1));
  CHECK_FALSE(check_embedding(e1_default(), e2));
}

TEST_CASE("group law identities on E2") {
  const auto& c = e2_default();
  Rng rng(11);
  for (int i = 0; i < 20; ++i) {
    auto p = random_point(c, rng), q = random_point(c, rng), r = random_point(c, rng);
    CHECK(on_curve(c, p));
    CHECK(pt_add(c, p, q) == pt_add(c, q, p));
    CHECK(pt_add(c, pt_add(c, p, q), r) == pt_add(c, p, pt_add(c, q, r)));
    CHECK(pt_add(c, p, pt_neg(p)).inf);
    CHECK(pt_add(c, p, E2Point::infinity()) == p);
    CHECK(pt_double(c, p) == pt_add(c, p, p));
  }
  CHECK(pt_mul(c, c.order, c.g).inf);
  U256 nm1 = c.order;
  sub_from(nm1, u256(1));
  CHECK(pt_mul(c, nm1, c.g) == pt_neg(c.g));
  CHECK(pt_mul(c, u256(0), c.g).inf);
}

TEST_CASE("fast multiplication paths agree with affine double-and-add") {
  const auto& c = e2_default();
  Rng rng(12);
  FixedBaseTable<FeQ1> table(c, c.g);
  for (int i = 0; i < 20; ++i) {
    U256 k = rng.scalar_below(c.order);
    auto ref = pt_mul_affine(c, k, c.g);
    CHECK(pt_mul(c, k, c.g) == ref);
    CHECK(to_affine(table.mul(k)) == ref);
  }
  for (std::int64_t k : {0LL, 1LL, -1LL, 77LL, -123456LL}) {
    auto expect = k >= 0 ? pt_mul_affine(c, u256(k), c.g) : pt_neg(pt_mul_affine(c, u256(-k), c.g));
    CHECK(to_affine(jac_mul_i64(c, k, c.g)) == expect);
    CHECK(to_affine(table.mul_i64(k)) == expect);
  }
}

TEST_CASE("msm matches the sum of single multiplications") {
  const auto& c = e1_default();
  Rng rng(13);
  for (std::size_t n : {3u, 9u, 40u, 130u}) {
    std::vector<E1Point> pts;
    std::vector<U256> ks;
    JacPoint<FeP1> expect = JacPoint<FeP1>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      pts.push_back(pt_mul(c, rng.scalar_below(c.order), c.g));
      ks.push_back(i % 5 == 0 ? u256(rng.next_u64() % 1000) : rng.scalar_below(c.order));
      expect = jac_add(c, expect, jac_mul(c, ks.back(), pts.back()));
    }
    CHECK(to_affine(msm<FeP1>(c, pts, ks)) == to_affine(expect));
  }
}

TEST_CASE("point encoding round trips and rejects malformed input") {
  const auto& c = e2_default();
  Rng rng(14);
  for (int i = 0; i < 30; ++i) {
    auto p = random_point(c, rng);
    auto enc = encode_point(p);
    E2Point back;
    REQUIRE(decode_point(c, enc, back) == DecodeError::none);
    CHECK(back == p);
  }
  PointBytes inf = encode_point(E2Point::infinity());
  E2Point back;
  CHECK(decode_point(c, inf, back) == DecodeError::none);
  CHECK(back.inf);

  auto enc = encode_point(c.g);
  enc[0] = 0x04;
  CHECK(decode_point(c, enc, back) == DecodeError::invalid_prefix);
  inf[5] = 1;
  CHECK(decode_point(c, inf, back) == DecodeError::invalid_prefix);

  PointBytes big{};
  big[0] = 0x02;
  std::array<std::uint8_t, 32> pb;
  u256_to_be(FeQ1::P, pb);
  std::copy(pb.begin(), pb.end(), big.begin() + 1);
  CHECK(decode_point(c, big, back) == DecodeError::x_out_of_range);

  // find an x with no point above it
  int found = 0;
  for (std::uint64_t x = 2; x < 200 && !found; ++x) {
    FeQ1 fx = FeQ1::from_u64(x);
    if ((fx.sqr() + c.a) * fx + c.b == FeQ1::zero() || ((fx.sqr() + c.a) * fx + c.b).is_square()) continue;
    PointBytes bad{};
    bad[0] = 0x02;
    fx.to_be(std::span<std::uint8_t, 32>(bad.data() + 1, 32));
    CHECK(decode_point(c, bad, back) == DecodeError::not_on_curve);
    found = 1;
  }
  CHECK(found == 1);
}

TEST_CASE("E1 cofactor points are caught by the subgroup check") {
  const auto& c = e1_default();
  // a random x on the full curve is almost never in the prime-order subgroup
  Rng rng(15);
  int rejected = 0;
  for (int i = 0; i < 20; ++i) {
    FeP1 x = FeP1::from_canonical(rng.scalar_below(FeP1::P));
    FeP1 y;
    if (!((x.sqr() + c.a) * x + c.b).sqrt(y)) continue;
    auto enc = encode_point(E1Point::of(x, y));
    E1Point back;
    if (decode_point(c, enc, back, true) == DecodeError::not_in_subgroup) ++rejected;
  }
  CHECK(rejected > 0);
  auto enc = encode_point(c.g);
  E1Point back;
  CHECK(decode_point(c, enc, back, true) == DecodeError::none);
}
