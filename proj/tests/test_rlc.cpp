#include "doctest.h"
#include "vpin/rlc.hpp"

using namespace vpin;
using namespace vpin::rlc;

namespace {

struct Env {
  Ahe ahe;
  Env() {
    Rng r(5);
    ahe.set_public_key(ahe.keygen(r).pk);
  }
};
const Ahe& ahe() {
  static Env e;
  return e.ahe;
}

CTensor enc_tensor(Rng& rng, int c, int h, int w) {
  CTensor t(c, h, w);
  for (auto& x : t.data) x = ahe().enc(static_cast<std::int64_t>(rng.uniform(1 << 16)) - (1 << 15), rng);
  return t;
}

ConvSpec conv_spec(Rng& rng, int k, int pad, int in, int out) {
  ConvSpec s{k, 1, pad, in, out, {}, {}};
  for (int i = 0; i < out * in * k * k; ++i) s.w.push_back(static_cast<std::int32_t>(rng.next_u64()));  // full int32 range
  return s;
}

std::vector<std::int64_t> widen(const std::vector<std::int32_t>& w) { return {w.begin(), w.end()}; }

std::vector<cps::Fq> as_field(const std::vector<std::int64_t>& v) {
  std::vector<cps::Fq> out;
  for (auto x : v) out.push_back(cps::Fq::from_i64(x));
  return out;
}

Digest digest_of(std::uint64_t s) {
  Bytes b(8);
  for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(s >> (8 * i));
  return sha256(b);
}

U256 random_gamma(Rng& rng) { return derive_challenge(digest_of(rng.next_u64()), "conv-γ").gamma; }

std::vector<U256> deltas(Rng& rng, int n) {
  std::vector<U256> d{u256(1)};
  Digest dg = digest_of(rng.next_u64());
  for (int i = 1; i < n; ++i) d.push_back(derive_coeff(dg, "conv-γ/δ", i));
  return d;
}

}  // namespace

TEST_CASE("challenge derivation") {
  Digest d = sha256(as_bytes("transcript"));
  auto a = derive_challenge(d, "conv-γ");
  auto b = derive_challenge(d, "conv-γ");
  auto c = derive_challenge(d, "fc1-γ");
  CHECK(a.gamma == b.gamma);
  CHECK_FALSE(a.gamma == c.gamma);
  CHECK(bit_length(a.gamma) <= 128);
  CHECK_FALSE(is_zero(a.gamma));
  // frozen vector, cross-checked with Python hmac/hashlib
  CHECK(u256_to_dec(a.gamma) == REGRESSION_GAMMA);
  for (std::uint32_t i = 0; i < 50; ++i) {
    U256 r = derive_coeff(d, "fc1-γ", i);
    CHECK(bit_length(r) <= kCoeffBits);
    CHECK_FALSE(is_zero(r));
  }
  CHECK_FALSE(derive_coeff(d, "fc1-γ", 0) == derive_coeff(d, "fc1-γ", 1));
}

TEST_CASE("flatten_conv window extraction") {
  Rng rng(1);
  auto t3 = enc_tensor(rng, 1, 3, 3);
  auto f3 = flatten_conv(t3, 3, 1);
  CHECK(f3.rows == 1);
  CHECK(f3.cols == 9);
  for (int i = 0; i < 9; ++i) CHECK(f3.at(0, i) == t3.data[i]);

  auto t4 = enc_tensor(rng, 1, 4, 4);
  auto f4 = flatten_conv(t4, 3, 1);
  CHECK(f4.rows == 4);
  for (int r = 0; r < 4; ++r) {
    int i = r / 2, j = r % 2;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) CHECK(f4.at(r, a * 3 + b) == t4.at(0, i + a, j + b));
    }
  }
  auto f1 = flatten_conv(t4, 1, 1);
  CHECK(f1.rows == 16);
  CHECK(f1.cols == 1);
  for (int i = 0; i < 16; ++i) CHECK(f1.at(i, 0) == t4.data[i]);

  auto fp = flatten_conv(t3, 3, 1, 1);
  CHECK(fp.rows == 9);
  CHECK(fp.at(0, 0) == Ciphertext{});
  CHECK(fp.at(0, 4) == t3.at(0, 0, 0));
  CHECK_THROWS_AS(flatten_conv(t4, 3, 2), ModelError);
}

TEST_CASE("conv aggregation: completeness and tamper detection") {
  Rng rng(2);
  const auto& c = e2_default();
  auto s = conv_spec(rng, 3, 1, 2, 3);
  s.bias = {5, -6, 7};
  auto in = enc_tensor(rng, 2, 5, 5);
  std::vector<std::int64_t> bias_plain = s.bias;
  auto bias = ahe().enc_many(bias_plain, rng);
  auto out = conv_enc(c, s, in, bias);
  auto f = widen(s.w);

  auto d = deltas(rng, 3);
  CHECK(holds(aggregate_conv(s, in, out, bias, random_gamma(rng), d), f));
  CHECK(holds(aggregate_conv(s, in, out, bias, u256(1), d), f));

  int rejected = 0;
  for (int t = 0; t < 100; ++t) {
    auto bad = out;
    std::size_t cell = rng.uniform(bad.size());
    bad.data[cell] = ahe().add(bad.data[cell], ahe().enc(1 + static_cast<std::int64_t>(rng.uniform(1000)), rng));
    rejected += !holds(aggregate_conv(s, in, bad, bias, random_gamma(rng), d), f);
  }
  CHECK(rejected == 100);
  auto f2 = f;
  f2[4] += 1;
  CHECK_FALSE(holds(aggregate_conv(s, in, out, bias, random_gamma(rng), d), f2));
}

TEST_CASE("conv statement circuit counts and soundness") {
  Rng rng(3);
  const auto& c = e2_default();
  auto s = conv_spec(rng, 3, 0, 1, 1);
  auto in = enc_tensor(rng, 1, 6, 6);
  auto out = conv_enc(c, s, in, {});
  auto st = aggregate_conv(s, in, out, {}, random_gamma(rng), std::vector<U256>{u256(1)});
  auto model = as_field(widen(s.w));
  for (int which = 0; which < 2; ++which) {
    r1cs::ConstraintSystem cs(r1cs::ConstraintSystem::Mode::stream);
    conv_statement_circuit(cs, model, st, which);
    CHECK(cs.is_satisfied());
    CHECK(cs.stats().n_point_mults == 9);
    CHECK(cs.stats().n_point_adds == 8);
    CHECK(cs.num_constraints() == 31256);
    CHECK(closed_form(Statement{st}).mults == 9);
    CHECK(closed_form(Statement{st}).adds == 8);
  }
  auto bad = model;
  bad[3] += cps::Fq::one();
  r1cs::ConstraintSystem cs(r1cs::ConstraintSystem::Mode::stream);
  bool failed = false;
  try {
    conv_statement_circuit(cs, bad, st, 0);
    failed = !cs.is_satisfied();
  } catch (const r1cs::GadgetError&) {
    failed = true;
  }
  CHECK(failed);
}

TEST_CASE("pool aggregation and circuit") {
  Rng rng(4);
  const auto& c = e2_default();
  auto in = enc_tensor(rng, 2, 4, 4);
  auto sums = pool_sum_enc(c, 2, in);
  std::int64_t kp = 16384;
  auto out = pool_scale_enc(c, sums, kp);
  auto st = aggregate_pool(2, kp, in, out);
  CHECK(st.sums.size() == 8);
  CHECK(st.sums[0] == sums.data[0]);
  CHECK(holds(st));
  r1cs::ConstraintSystem cs(r1cs::ConstraintSystem::Mode::stream);
  pool_statement_circuit(cs, st, 1);
  CHECK(cs.is_satisfied());
  CHECK(cs.stats().n_point_adds == 3 * 8);
  CHECK(cs.stats().n_point_mults == 0);
  CHECK(closed_form(Statement{st}).adds == 24);

  auto bad_out = out;
  bad_out.data[2] = ahe().add(bad_out.data[2], ahe().enc(1, rng));
  auto bst = aggregate_pool(2, kp, in, bad_out);
  CHECK_FALSE(holds(bst));
  r1cs::ConstraintSystem cs2(r1cs::ConstraintSystem::Mode::stream);
  bool failed = false;
  try {
    pool_statement_circuit(cs2, bst, 0);
    failed = !cs2.is_satisfied();
  } catch (const r1cs::GadgetError&) {
    failed = true;
  }
  CHECK(failed);
}

TEST_CASE("fc aggregation: completeness, zero weights and tamper detection") {
  Rng rng(5);
  const auto& c = e2_default();
  FcSpec s{6, 3, {}, {1, 2, 3}};
  for (int i = 0; i < 18; ++i) s.w.push_back(static_cast<std::int32_t>(rng.next_u64()));
  std::vector<Ciphertext> d;
  for (int j = 0; j < 6; ++j) d.push_back(ahe().enc(j * 1000 - 2500, rng));
  auto bias = ahe().enc_many(s.b, rng);
  auto t = fc_enc(c, s, d, bias);
  Digest dg = digest_of(9);
  std::vector<U256> rho;
  for (int i = 0; i < 3; ++i) rho.push_back(derive_coeff(dg, "fc1-γ", i));
  auto w = widen(s.w);
  CHECK(holds(aggregate_fc(s, d, t, bias, rho), w));

  FcSpec z{6, 3, std::vector<std::int32_t>(18, 0), {1, 2, 3}};
  auto tz = fc_enc(c, z, d, bias);
  CHECK(tz == bias);
  auto stz = aggregate_fc(z, d, tz, bias, rho);
  for (const auto& e : stz.e) CHECK(e == Ciphertext{});
  CHECK(holds(stz, widen(z.w)));

  int rejected = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto bad = t;
    std::size_t i = rng.uniform(3);
    bad[i] = ahe().add(bad[i], ahe().enc(1 + static_cast<std::int64_t>(rng.uniform(1 << 20)), rng));
    std::vector<U256> r;
    Digest dd = digest_of(rng.next_u64());
    for (int k = 0; k < 3; ++k) r.push_back(derive_coeff(dd, "fc1-γ", k));
    rejected += !holds(aggregate_fc(s, d, bad, bias, r), w);
  }
  CHECK(rejected == 100);
}

TEST_CASE("fc statement circuit counts") {
  Rng rng(6);
  const auto& c = e2_default();
  FcSpec s{64, 16, {}, std::vector<std::int64_t>(16, 0)};
  for (int i = 0; i < 64 * 16; ++i) s.w.push_back(static_cast<std::int32_t>(rng.uniform(2001)) - 1000);
  std::vector<Ciphertext> d;
  for (int j = 0; j < 64; ++j) d.push_back(ahe().enc(static_cast<std::int64_t>(rng.uniform(1 << 16)), rng));
  auto bias = ahe().enc_many(s.b, rng);
  auto t = fc_enc(c, s, d, bias);
  std::vector<U256> rho;
  Digest dg = digest_of(10);
  for (int i = 0; i < 16; ++i) rho.push_back(derive_coeff(dg, "fc1-γ", i));
  auto st = aggregate_fc(s, d, t, bias, rho);
  auto model = as_field(widen(s.w));
  r1cs::ConstraintSystem cs(r1cs::ConstraintSystem::Mode::stream);
  fc_statement_circuit(cs, model, st, 0);
  CHECK(cs.is_satisfied());
  CHECK(cs.stats().n_point_mults == 64);
  CHECK(cs.stats().n_point_adds == 63 + 16);
  CHECK(closed_form(Statement{st}).adds == 79);
}

TEST_CASE("session circuit through the proof system") {
  Rng rng(7);
  const auto& c = e2_default();
  auto s = conv_spec(rng, 3, 1, 1, 2);
  FcSpec f{4, 2, {}, {10, 20}};
  for (int i = 0; i < 8; ++i) f.w.push_back(static_cast<std::int32_t>(rng.uniform(201)) - 100);
  Model m;
  m.in_h = m.in_w = 4;
  m.layers = {Layer{LayerType::conv, s, {}, {}}, Layer{LayerType::fc, {}, {}, f}};
  auto L = model_layout(m);
  auto mv = model_vector(m);

  auto in = enc_tensor(rng, 1, 4, 4);
  auto a = conv_enc(c, s, in, {});
  auto st1 = aggregate_conv(s, in, a, {}, random_gamma(rng), deltas(rng, 2));
  st1.w_offset = L.conv_w[0];
  std::vector<Ciphertext> d(a.data.begin(), a.data.begin() + 4);
  auto bias = ahe().enc_many(f.b, rng);
  auto t = fc_enc(c, f, d, bias);
  std::vector<U256> rho{derive_coeff(digest_of(1), "fc1-γ", 0), derive_coeff(digest_of(1), "fc1-γ", 1)};
  auto st2 = aggregate_fc(f, d, t, bias, rho);
  st2.w_offset = L.fc_w[1];

  SessionCircuit circ({st1, st2});
  CHECK(circ.num_parts() == 4);
  auto pp = cps::setup(128, 64);
  cps::Opening o{as_field(mv), u256(99)};
  std::vector<cps::Opening> os{o};
  std::vector<cps::Commitment> cms{cps::commit(o.values, o.blinding, pp)};
  cps::CircuitReport rep;
  auto proof = cps::prove(circ, os, pp, &rep);
  CHECK(rep.stats.n_point_mults == 2 * (9 + 4));
  CHECK(rep.stats.n_point_adds == 2 * (8 + 3 + 2));
  std::vector<Statement> sts{st1, st2};
  auto pubs = public_inputs(sts);
  CHECK(pubs == proof.public_inputs);
  CHECK(cps::verify(proof, cms, pubs, circ, pp).accept);

  // a model that differs in one FC weight does not open the commitment
  auto mv2 = mv;
  mv2[L.fc_w[1] + 1] += 1;
  cps::Opening o2{as_field(mv2), u256(99)};
  std::vector<cps::Commitment> cms2{cps::commit(o2.values, o2.blinding, pp)};
  CHECK_FALSE(cps::verify(proof, cms2, proof.public_inputs, circ, pp).accept);
  std::vector<cps::Opening> os2{o2};
  CHECK_THROWS_AS(cps::prove(circ, os2, pp), cps::CpsError);
  // forging a bundle around the wrong model still fails the circuit check
  std::vector<cps::Commitment> cms3{cps::commit(o2.values, o2.blinding, pp)};
  auto forged = cps::assemble_reference(os2, pubs);
  auto vr = cps::verify(forged, cms3, pubs, circ, pp);
  CHECK_FALSE(vr.accept);
  CHECK(vr.reason.find("part") != std::string::npos);
}
