#include <chrono>
#include <cmath>

#include "doctest.h"
#include "vpin/ahe.hpp"

using namespace vpin;

namespace {

std::shared_ptr<const BsgsTable> small_table() {
  static auto t = std::make_shared<const BsgsTable>(e2_default(), 16);
  return t;
}

struct Keys {
  Ahe ahe;
  KeyPair kp;
  Decryptor dec;
  explicit Keys(std::uint64_t seed) : ahe(), kp(make(seed)), dec(kp.sk, small_table()) { ahe.set_public_key(kp.pk); }
  static KeyPair make(std::uint64_t seed) {
    Rng rng(seed);
    return Ahe().keygen(rng);
  }
};

}  // namespace

TEST_CASE("keygen is deterministic under a seed and yields pk = sk*G") {
  Rng a(42), b(42), c(43);
  Ahe ahe;
  auto k1 = ahe.keygen(a), k2 = ahe.keygen(b), k3 = ahe.keygen(c);
  CHECK(k1.sk == k2.sk);
  CHECK(k1.pk == k2.pk);
  CHECK(k1.sk != k3.sk);
  CHECK(on_curve(e2_default(), k1.pk));
  CHECK(k1.pk == pt_mul_affine(e2_default(), k1.sk, e2_default().g));
}

TEST_CASE("encryption matches the textbook formulas") {
  Keys k(1);
  const auto& c = e2_default();
  U256 r = u256(987654321);
  auto ct = k.ahe.enc_with(-7, r);
  CHECK(ct.c1 == pt_mul_affine(c, r, c.g));
  U256 qm7 = c.order;
  sub_from(qm7, u256(7));
  CHECK(ct.c2 == pt_add(c, pt_mul_affine(c, qm7, c.g), pt_mul_affine(c, r, k.kp.pk)));
  auto zero = k.ahe.enc_with(0, r);
  CHECK(zero.c2 == pt_mul_affine(c, r, k.kp.pk));
}

TEST_CASE("roundtrip and bound handling") {
  Keys k(2);
  Rng rng(3);
  CHECK(k.dec.dec(k.ahe.enc(12345, rng)) == 12345);
  CHECK(k.dec.dec(k.ahe.enc(-7, rng)) == -7);
  CHECK(k.dec.dec(Ciphertext{}) == 0);
  CHECK_THROWS_AS(k.ahe.enc(std::int64_t{1} << 35, rng), AheError);
  // 2^36 encrypted with a wider bound, decrypted with the 35-bit bound
  auto big = k.ahe.enc(std::int64_t{1} << 36, rng, 40);
  try {
    k.dec.dec(big, 35);
    CHECK(false);
  } catch (const AheError& e) {
    CHECK(e.code == AheError::Code::dlog_not_found);
  }
}

TEST_CASE("random signed values near the 2^26 range decrypt exactly in a batch") {
  Keys k(4);
  Rng rng(5);
  std::vector<std::int64_t> ms;
  for (int i = 0; i < 200; ++i) {
    std::int64_t v = static_cast<std::int64_t>(rng.uniform(std::uint64_t{1} << 27)) - (std::int64_t{1} << 26);
    ms.push_back(v);
  }
  ms.push_back(0);
  ms.push_back(1);
  ms.push_back(-1);
  ms.push_back((1 << 17) + 1);  // exactly a stride boundary for 16-bit baby steps
  ms.push_back(-((1 << 17) + 1));
  auto cts = k.ahe.enc_many(ms, rng);
  auto back = k.dec.dec_many(cts);
  CHECK(back == ms);
  for (std::size_t i = 0; i < 10; ++i) CHECK(k.dec.dec(cts[i]) == ms[i]);
}

TEST_CASE("homomorphic identities") {
  Keys k(6);
  Rng rng(7);
  auto e3 = k.ahe.enc(3, rng), e4 = k.ahe.enc(4, rng);
  CHECK(k.dec.dec(k.ahe.add(e3, e4)) == 7);
  CHECK(k.dec.dec(k.ahe.sub(e3, e4)) == -1);
  CHECK(k.dec.dec(k.ahe.scal_mul(std::int64_t{5}, e3)) == 15);
  CHECK(k.dec.dec(k.ahe.scal_mul(std::int64_t{-2}, e3)) == -6);
  U256 minus2 = e2_default().order;
  sub_from(minus2, u256(2));
  CHECK(k.ahe.scal_mul(minus2, e3) == k.ahe.scal_mul(std::int64_t{-2}, e3));
  for (int i = 0; i < 20; ++i) {
    std::int64_t a = static_cast<std::int64_t>(rng.uniform(200000)) - 100000;
    std::int64_t b = static_cast<std::int64_t>(rng.uniform(200000)) - 100000;
    std::int64_t s = static_cast<std::int64_t>(rng.uniform(2000)) - 1000;
    auto ea = k.ahe.enc(a, rng), eb = k.ahe.enc(b, rng);
    CHECK(k.dec.dec(k.ahe.add(ea, eb)) == a + b);
    CHECK(k.dec.dec(k.ahe.scal_mul(s, ea)) == s * a);
  }
}

TEST_CASE("re-encryption of the same value is randomized") {
  Keys k(8);
  Rng rng(9);
  auto first = k.ahe.enc(99, rng);
  int distinct = 0;
  for (int i = 0; i < 100; ++i) distinct += !(k.ahe.enc(99, rng).c1 == first.c1);
  CHECK(distinct == 100);
}

TEST_CASE("ciphertext and key encodings") {
  Keys k(10);
  Rng rng(11);
  auto ct = k.ahe.enc(-5, rng);
  auto bytes = encode_ciphertext(ct);
  CHECK(decode_ciphertext(e2_default(), bytes) == ct);
  bytes[0] = 0x07;
  CHECK_THROWS_AS(decode_ciphertext(e2_default(), bytes), AheError);
  auto skb = encode_secret_key(k.kp.sk);
  CHECK(decode_secret_key(skb) == k.kp.sk);
  std::array<std::uint8_t, 32> zero{};
  CHECK_THROWS(decode_secret_key(zero));
}

TEST_CASE("fixed-point codec") {
  CHECK(fp_encode(1.5, 16) == 98304);
  CHECK(fp_encode(0.25, 16) == 16384);
  CHECK(fp_encode(-0.5, 16) == -32768);
  CHECK(fp_encode(2.5 / 65536.0, 16) == 2);  // tie goes to even
  CHECK(fp_encode(3.5 / 65536.0, 16) == 4);
  CHECK(fp_encode(-2.5 / 65536.0, 16) == -2);
  CHECK(truncate(9663676416, 16) == 147456);
  CHECK(fp_encode(2.25, 16) == 147456);
  CHECK(truncate(5, 0) == 5);
  CHECK(truncate(-1, 4) == -1);
  CHECK(truncate(-17, 4) == -2);
  CHECK_THROWS_AS(fp_encode(1e30, 16), AheError);
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    double x = (static_cast<double>(rng.next_u64() % 2000000) / 1000.0) - 1000.0;
    CHECK(std::fabs(fp_decode(fp_encode(x, 16), 16) - x) <= std::ldexp(1.0, -16));
  }
}
