#include "doctest.h"
#include "vpin/cpsnark.hpp"

using namespace vpin;
using namespace vpin::cps;
using r1cs::ConstraintSystem;

namespace {

const PublicParams& pp16() {
  static PublicParams pp = setup(128, 16);
  return pp;
}

std::vector<Fq> random_vec(Rng& rng, std::size_t n) {
  std::vector<Fq> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(Fq::from_i64(static_cast<std::int64_t>(rng.next_u64() >> 33) - (1ll << 30)));
  return v;
}

// Proves knowledge of a committed scalar w with w * P = Q for public P, Q.
struct MulCircuit : Circuit {
  E2Point p, q;
  void synthesize(ConstraintSystem& cs, std::size_t, std::span<const Opening> committed) const override {
    Var w = cs.alloc_committed(0, committed[0].values.at(0));
    auto cp = r1cs::alloc_point(cs, p, r1cs::VarKind::pub);
    auto cq = r1cs::alloc_point(cs, q, r1cs::VarKind::pub);
    r1cs::pt_mul_gadget(cs, e2_default(), w, cp, 32, &cq);
  }
  using Var = r1cs::Var;
};

std::vector<Fq> pub_of(const E2Point& p, const E2Point& q) {
  auto one = [](const E2Point& x) {
    return std::vector<Fq>{x.inf ? Fq::zero() : x.x, x.inf ? Fq::zero() : x.y, x.inf ? Fq::one() : Fq::zero()};
  };
  auto a = one(p), b = one(q);
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("setup is deterministic and lands on E1") {
  auto a = setup(128, 8), b = setup(128, 8);
  REQUIRE(a.g.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(a.g[i] == b.g[i]);
    CHECK(on_curve(e1_default(), a.g[i]));
    CHECK(jac_mul(e1_default(), e1_default().order, a.g[i]).is_inf());
    for (std::size_t j = 0; j < i; ++j) CHECK_FALSE(a.g[i] == a.g[j]);
    CHECK_FALSE(a.g[i] == a.h);
  }
  CHECK(a.h == b.h);
  auto other = setup(128, 2, "another domain");
  CHECK_FALSE(other.g[0] == a.g[0]);
}

TEST_CASE("pedersen commitments") {
  const auto& pp = pp16();
  Rng rng(1);
  auto v = random_vec(rng, 10);
  U256 r = rng.scalar_below(e1_default().order);
  CHECK(commit(v, r, pp) == commit(v, r, pp));
  CHECK(commit(v, r, pp) == commit_serial(v, r, pp));
  std::vector<Fq> zero(10);
  CHECK(commit(zero, r, pp).point == pt_mul_affine(e1_default(), r, pp.h));
  auto v2 = v;
  v2[3] += Fq::one();
  CHECK_FALSE(commit(v2, r, pp) == commit(v, r, pp));
  std::vector<Fq> too_long(17);
  CHECK_THROWS_AS(commit(too_long, r, pp), CpsError);

  // no collisions over random distinct pairs
  int collisions = 0;
  for (int i = 0; i < 100; ++i) {
    auto a = random_vec(rng, 6), b = random_vec(rng, 6);
    U256 ra = rng.scalar_below(e1_default().order), rb = rng.scalar_below(e1_default().order);
    collisions += commit(a, ra, pp) == commit(b, rb, pp);
  }
  CHECK(collisions == 0);

  auto cm = commit(v, r, pp);
  auto bytes = encode_commitment(cm);
  CHECK(decode_commitment(bytes) == cm);
}

TEST_CASE("parallel commitment matches serial on a large vector") {
  auto pp = setup(128, 5000);
  Rng rng(2);
  auto v = random_vec(rng, 5000);
  U256 r = rng.scalar_below(e1_default().order);
  CHECK(commit(v, r, pp) == commit_serial(v, r, pp));
}

TEST_CASE("prove and verify a committed scalar multiplication") {
  const auto& pp = pp16();
  Rng rng(3);
  MulCircuit c;
  c.p = pt_mul(e2_default(), u256(rng.next_u64()), e2_default().g);
  std::int64_t w = 123456789;
  c.q = pt_mul(e2_default(), u256(w), c.p);
  Opening o{{Fq::from_i64(w)}, rng.scalar_below(e1_default().order)};
  Commitment cm = commit(o.values, o.blinding, pp);
  std::vector<Opening> openings{o};
  CircuitReport rep;
  auto proof = prove(c, openings, pp, &rep);
  CHECK(rep.stats.n_point_mults == 1);
  CHECK(rep.stats.n_constraints == r1cs::pt_mul_rows(32));
  auto pub = pub_of(c.p, c.q);
  std::vector<Commitment> cms{cm};
  CHECK(verify(proof, cms, pub, c, pp).accept);

  // serialization roundtrip
  auto bytes = serialize(proof);
  CHECK(bytes[0] == 'V');
  auto back = deserialize(bytes);
  CHECK(verify(back, cms, pub, c, pp).accept);

  SUBCASE("bit flips are rejected") {
    int rejected = 0;
    for (int t = 0; t < 100; ++t) {
      auto b = bytes;
      std::size_t bit = rng.uniform(b.size() * 8);
      b[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
      try {
        auto pb = deserialize(b);
        rejected += !verify(pb, cms, pub, c, pp).accept;
      } catch (const CpsError&) {
        ++rejected;
      }
    }
    CHECK(rejected == 100);
  }
  SUBCASE("a different committed value is rejected") {
    Opening o2{{Fq::from_i64(w + 1)}, o.blinding};
    std::vector<Commitment> cms2{commit(o2.values, o2.blinding, pp)};
    CHECK_FALSE(verify(proof, cms2, pub, c, pp).accept);
  }
  SUBCASE("a wrong public output is rejected") {
    MulCircuit bad = c;
    bad.q = pt_add(e2_default(), c.q, e2_default().g);
    auto pub2 = pub_of(bad.p, bad.q);
    CHECK_FALSE(verify(proof, cms, pub2, bad, pp).accept);
    // and the prover refuses the false statement
    try {
      prove(bad, openings, pp);
      CHECK(false);
    } catch (const CpsError& e) {
      CHECK(e.code == CpsError::Code::unsatisfied_circuit);
    }
  }
  SUBCASE("truncated proof is rejected") {
    auto b = bytes;
    b.pop_back();
    CHECK_THROWS_AS(deserialize(b), CpsError);
  }
}

TEST_CASE("multi-part circuits") {
  const auto& pp = pp16();
  struct Parts : Circuit {
    std::size_t num_parts() const override { return 4; }
    void synthesize(ConstraintSystem& cs, std::size_t part, std::span<const Opening> committed) const override {
      auto x = cs.alloc_committed(0, committed[0].values[part]);
      auto y = cs.alloc_public(committed[0].values[part].sqr());
      cs.enforce(x, x, y);
    }
  } c;
  Opening o{{Fq::from_u64(2), Fq::from_u64(3), Fq::from_u64(4), Fq::from_u64(5)}, u256(7)};
  std::vector<Opening> os{o};
  std::vector<Commitment> cms{commit(o.values, o.blinding, pp)};
  auto proof = prove(c, os, pp);
  std::vector<Fq> pub{Fq::from_u64(4), Fq::from_u64(9), Fq::from_u64(16), Fq::from_u64(25)};
  CHECK(proof.public_inputs == pub);
  CHECK(verify(proof, cms, pub, c, pp).accept);
  pub[2] = Fq::from_u64(17);
  CHECK_FALSE(verify(proof, cms, pub, c, pp).accept);
}
