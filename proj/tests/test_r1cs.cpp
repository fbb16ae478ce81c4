#include <sstream>

#include "doctest.h"
#include "vpin/r1cs.hpp"
#include "vpin/util.hpp"

using namespace vpin;
using namespace vpin::r1cs;

namespace {

const E2Params& E() { return e2_default(); }

E2Point random_point(Rng& rng) {
  U256 k = u256(rng.next_u64());
  return pt_mul(E(), k, E().g);
}

// 128-bit scalar, high half random too
U256 random_scalar128(Rng& rng) { return U256{rng.next_u64(), rng.next_u64(), 0, 0}; }

}  // namespace

TEST_CASE("pinned gadget row counts") {
  CHECK(kPtAddRows == 10);
  CHECK(kPtDblRows == 7);
  CHECK(kPtMulRows == 3464);

  Rng rng(1);
  ConstraintSystem cs;
  auto a = alloc_point(cs, random_point(rng));
  auto b = alloc_point(cs, random_point(rng));
  std::size_t before = cs.num_constraints();
  pt_add_gadget(cs, E(), a, b);
  CHECK(cs.num_constraints() - before == kPtAddRows);
  before = cs.num_constraints();
  pt_dbl_gadget(cs, E(), a);
  CHECK(cs.num_constraints() - before == kPtDblRows);
  before = cs.num_constraints();
  Var w = cs.alloc(Fq::from_u64(12345));
  pt_mul_gadget(cs, E(), w, a);
  CHECK(cs.num_constraints() - before == kPtMulRows);
  CHECK(cs.stats().n_point_mults == 1);
  CHECK(cs.stats().n_point_adds == 1);
  CHECK(cs.is_satisfied());
}

TEST_CASE("bit decomposition") {
  ConstraintSystem cs;
  Var six = cs.alloc(Fq::from_u64(6));
  auto bits = revbin_gadget(cs, six, 3);
  REQUIRE(bits.size() == 3);
  CHECK(cs.value(bits[0]) == Fq::zero());
  CHECK(cs.value(bits[1]) == Fq::one());
  CHECK(cs.value(bits[2]) == Fq::one());
  CHECK(cs.num_constraints() == 4);
  CHECK(cs.is_satisfied());

  ConstraintSystem z;
  auto zb = revbin_gadget(z, z.alloc(Fq::zero()), 128);
  for (Var v : zb) CHECK(z.value(v).is_zero());
  CHECK(z.is_satisfied());

  ConstraintSystem m;
  U256 max{~0ull, ~0ull, 0, 0};
  auto mb = revbin_gadget(m, m.alloc(Fq::from_canonical(max)), 128);
  for (Var v : mb) CHECK(m.value(v) == Fq::one());
  CHECK(m.num_constraints() == 129);
  CHECK(m.is_satisfied());

  ConstraintSystem o;
  U256 over{0, 0, 1, 0};
  CHECK_THROWS_AS(revbin_gadget(o, o.alloc(Fq::from_canonical(over)), 128), GadgetError);

  // a non-boolean bit breaks its booleanity row
  m.set_value(mb[5], Fq::from_u64(2));
  CHECK_FALSE(m.is_satisfied());
  CHECK(m.first_violation() == std::optional<std::size_t>(5));
}

TEST_CASE("point addition gadget agrees with native arithmetic") {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    E2Point pa = random_point(rng), pb = random_point(rng);
    if (i % 10 == 0) pa = E2Point::infinity();
    if (i % 10 == 1) pb = E2Point::infinity();
    ConstraintSystem cs;
    auto a = alloc_point(cs, pa), b = alloc_point(cs, pb);
    auto c = pt_add_gadget(cs, E(), a, b);
    CHECK(point_value(cs, c) == pt_add(E(), pa, pb));
    CHECK(cs.is_satisfied());
  }
  // equal x with both points finite (P + P, P + -P) has no chord; the witness generator refuses
  ConstraintSystem cs;
  auto a = alloc_point(cs, E().g);
  auto na = alloc_point(cs, pt_neg(E().g));
  CHECK_THROWS_AS(pt_add_gadget(cs, E(), a, a), GadgetError);
  CHECK_THROWS_AS(pt_add_gadget(cs, E(), a, na), GadgetError);
}

TEST_CASE("point doubling gadget agrees with native arithmetic") {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    E2Point pa = i == 0 ? E2Point::infinity() : random_point(rng);
    ConstraintSystem cs;
    auto a = alloc_point(cs, pa);
    auto d = pt_dbl_gadget(cs, E(), a);
    CHECK(point_value(cs, d) == pt_double(E(), pa));
    CHECK(cs.is_satisfied());
  }
}

TEST_CASE("point multiplication gadget agrees with native arithmetic") {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    E2Point pp = i == 0 ? E2Point::infinity() : random_point(rng);
    U256 k = i == 1 ? U256{} : random_scalar128(rng);
    ConstraintSystem cs(i % 2 ? ConstraintSystem::Mode::stream : ConstraintSystem::Mode::store);
    auto p = alloc_point(cs, pp);
    Var w = cs.alloc(Fq::from_canonical(k));
    auto q = pt_mul_gadget(cs, E(), w, p);
    CHECK(point_value(cs, q) == pt_mul(E(), k, pp));
    CHECK(cs.num_constraints() == kPtMulRows);
    CHECK(cs.is_satisfied());
  }
}

TEST_CASE("preallocated outputs bind the result") {
  Rng rng(5);
  E2Point pp = random_point(rng);
  U256 k = random_scalar128(rng);
  E2Point expect = pt_mul(E(), k, pp);
  for (bool honest : {true, false}) {
    ConstraintSystem cs;
    auto p = alloc_point(cs, pp);
    E2Point target = honest ? expect : pt_add(E(), expect, E().g);
    auto out = alloc_point(cs, target, VarKind::pub);
    pt_mul_gadget(cs, E(), cs.alloc(Fq::from_canonical(k)), p, 128, &out);
    CHECK(cs.is_satisfied() == honest);
  }
  for (bool honest : {true, false}) {
    ConstraintSystem cs;
    E2Point pa = random_point(rng), pb = random_point(rng);
    auto a = alloc_point(cs, pa), b = alloc_point(cs, pb);
    E2Point target = honest ? pt_add(E(), pa, pb) : pa;
    auto out = alloc_point(cs, target, VarKind::pub);
    pt_add_gadget(cs, E(), a, b, &out);
    CHECK(cs.is_satisfied() == honest);
    CHECK(cs.public_vars().size() == 3);
  }
}

TEST_CASE("mutating any gadget variable breaks satisfaction") {
  Rng rng(6);
  ConstraintSystem cs;
  auto p = alloc_point(cs, random_point(rng));
  Var w = cs.alloc(Fq::from_canonical(U256{rng.next_u64() & 0xffff, 0, 0, 0}));
  pt_mul_gadget(cs, E(), w, p, 16);
  REQUIRE(cs.is_satisfied());
  int caught = 0, tried = 0;
  for (std::uint32_t idx = 1; idx < cs.num_vars(); idx += 7) {
    Var v{idx};
    Fq old = cs.value(v);
    cs.set_value(v, old + Fq::one());
    ++tried;
    caught += !cs.is_satisfied();
    cs.set_value(v, old);
  }
  CHECK(caught == tried);
  CHECK(cs.is_satisfied());
}

TEST_CASE("empty system and explicit rows") {
  ConstraintSystem cs;
  CHECK(cs.is_satisfied());
  CHECK(cs.num_constraints() == 0);
  Var x = cs.alloc(Fq::from_u64(3));
  Var y = cs.alloc(Fq::from_u64(9));
  cs.enforce(x, x, y);
  CHECK(cs.is_satisfied());
  cs.enforce(x, x, Lc::constant(Fq::from_u64(10)));
  CHECK_FALSE(cs.is_satisfied());
  CHECK(cs.first_violation() == std::optional<std::size_t>(1));

  ConstraintSystem st(ConstraintSystem::Mode::stream);
  Var a = st.alloc(Fq::from_u64(2));
  st.enforce(a, a, Lc::constant(Fq::from_u64(4)));
  CHECK(st.is_satisfied());
  st.enforce(a, a, Lc::constant(Fq::from_u64(5)));
  CHECK_FALSE(st.is_satisfied());
}

TEST_CASE("parallel and serial checks agree") {
  Rng rng(7);
  ConstraintSystem cs;
  auto p = alloc_point(cs, random_point(rng));
  for (int i = 0; i < 8; ++i) pt_mul_gadget(cs, E(), cs.alloc(Fq::from_canonical(random_scalar128(rng))), p);
  CHECK(cs.is_satisfied() == cs.is_satisfied_serial());
  CHECK(cs.is_satisfied());
  cs.set_value(Var{static_cast<std::uint32_t>(cs.num_vars() - 5)}, Fq::from_u64(77));
  CHECK(cs.is_satisfied() == cs.is_satisfied_serial());
  CHECK_FALSE(cs.is_satisfied());
}

TEST_CASE("dump lists every row") {
  ConstraintSystem cs;
  Var x = cs.alloc_public(Fq::from_u64(3));
  Var y = cs.alloc(Fq::from_u64(6));
  cs.enforce(Lc::term(x, Fq::from_u64(2)), kOne, y);
  cs.enforce(Lc(y) - Lc(x), kOne, x);
  std::ostringstream os;
  cs.dump(os);
  CHECK(os.str() == "r1cs vars=3 public=1 constraints=2\n 1:2 | 0:1 | 2:1\n 2:1 1:-1 | 0:1 | 1:1\n");
}

TEST_CASE("baseline constraint estimator") {
  GadgetStats s;
  s.n_point_mults = 1;
  CHECK(estimate_baseline_noCE(s).total == 76834);
  s = {};
  s.n_point_adds = 1;
  CHECK(estimate_baseline_noCE(s).total == 230);
  s.n_point_mults = 652040;
  s.n_point_adds = 637248;
  CHECK(estimate_baseline_noCE(s).total == 50245408400ull);
  CHECK(embedded_constraints(7508, 16864) == 7508ull * 3464 + 16864ull * 10);
}
