#include <thread>

#include "doctest.h"
#include "json.hpp"
#include "vpin/protocol.hpp"

using namespace vpin;
using namespace vpin::proto;

namespace {

std::shared_ptr<const BsgsTable> table() {
  static auto t = std::make_shared<const BsgsTable>(e2_default(), 20);
  return t;
}

Model toy(std::uint64_t seed = 1) {
  Rng r(seed);
  return make_network("toy", r, 10);
}

Sample toy_sample(const Model& m, std::uint64_t seed) {
  Rng r(seed);
  Sample s;
  s.f = m.f;
  s.x = ITensor(m.in_ch, m.in_h, m.in_w);
  for (auto& v : s.x.data) v = static_cast<std::int64_t>(r.uniform(1u << m.f));
  return s;
}

ClientConfig ccfg(std::uint64_t seed, bool interactive = false) {
  ClientConfig c;
  c.seed = seed;
  c.seeded = true;
  c.interactive = interactive;
  c.table = table();
  return c;
}

ServerConfig scfg(std::uint64_t seed, Attack a = Attack::none) {
  ServerConfig s;
  s.seed = seed;
  s.seeded = true;
  s.attack = a;
  return s;
}

// Position of the first frame of a type.
std::size_t find(const std::vector<Message>& ms, MsgType t) {
  for (std::size_t i = 0; i < ms.size(); ++i) {
    if (ms[i].type == t) return i;
  }
  return ms.size();
}

}  // namespace

TEST_CASE("framing") {
  Message m{MsgType::hello, {1, 0}};
  Bytes f = frame(m);
  CHECK(f == Bytes{0, 0, 0, 3, 1, 1, 0});
  Message back = unframe(f);
  CHECK(back.type == MsgType::hello);
  CHECK(back.payload == m.payload);

  Bytes two = f;
  Bytes g = frame(Message{MsgType::abort, {}});
  two.insert(two.end(), g.begin(), g.end());
  auto all = unframe_all(two);
  REQUIRE(all.size() == 2);
  CHECK(all[1].type == MsgType::abort);
  CHECK(all[1].payload.empty());

  Bytes cut(f.begin(), f.end() - 1);
  CHECK_THROWS_AS(unframe(cut), ProtocolError);
  Bytes bad = f;
  bad[4] = 99;
  CHECK_THROWS_AS(unframe(bad), ProtocolError);
  Bytes zero{0, 0, 0, 0};
  CHECK_THROWS_AS(unframe(zero), ProtocolError);
}

TEST_CASE("memory pipe and transcript digest") {
  auto [a, b] = memory_pipe();
  a->send(Message{MsgType::pubkey, {7, 8}});
  Message m = b->recv();
  CHECK(m.type == MsgType::pubkey);
  Transcript t1, t2;
  t1.append(m);
  t1.append(Message{MsgType::commit, {1}});
  t2.append(m);
  CHECK_FALSE(t1.digest() == t2.digest());
  t2.append(Message{MsgType::commit, {1}});
  CHECK(t1.digest() == t2.digest());
  CHECK(t1.digest() == sha256(t1.bytes()));
  a.reset();
  CHECK_THROWS_AS(b->recv(), ProtocolError);
}

TEST_CASE("session state ordering") {
  SessionState s(2);
  CHECK_THROWS_AS(s.advance(Phase::sample_sent), ProtocolError);  // no sample before commit
  s.advance(Phase::keyed);
  CHECK_THROWS_AS(s.advance(Phase::sample_sent), ProtocolError);
  s.advance(Phase::committed);
  s.advance(Phase::sample_sent);
  s.advance(Phase::layer_done);
  CHECK_THROWS_AS(s.advance(Phase::challenges_fixed), ProtocolError);
  s.advance(Phase::act_done);
  s.advance(Phase::layer_done);
  CHECK(s.layer() == 1);
  CHECK_THROWS_AS(s.advance(Phase::act_done), ProtocolError);
  s.advance(Phase::challenges_fixed);
  s.advance(Phase::proved);
  s.advance(Phase::verified);
  CHECK(s.phase() == Phase::verified);
}

TEST_CASE("architecture json keeps the layout") {
  Rng r(3);
  Model m = make_network("lenet", r, 12);
  Model a = arch_from_json(arch_to_json(m));
  CHECK(model_layout(a).total == model_layout(m).total);
  CHECK(model_layout(a).bias == model_layout(m).bias);
  CHECK(trace_shapes(a).shapes == trace_shapes(m).shapes);
  CHECK(challenge_label(m, 0) == "conv-γ");
  CHECK(challenge_label(m, 2) == "conv2-γ");
  CHECK(challenge_label(m, 4) == "conv3-γ");
  CHECK(challenge_label(m, 5) == "fc1-γ");
  CHECK(challenge_label(m, 6) == "fc2-γ");
  CHECK_THROWS_AS(arch_from_json("{\"f\":1}"), ModelError);
}

TEST_CASE("honest session matches the plaintext pipeline") {
  Model m = toy();
  Sample s = toy_sample(m, 11);
  auto ref = ref_infer(m, s.x);
  auto run = run_local(m, s, ccfg(5), scfg(6));
  INFO(run.client.reason);
  INFO(run.server.error);
  REQUIRE(run.client.outcome == Outcome::accepted);
  CHECK(run.client.logits == ref.logits);
  CHECK(run.client.prediction == ref.argmax());
  REQUIRE(run.client.decrypted.size() == m.layers.size() - 1);
  for (std::size_t i = 0; i + 1 < m.layers.size(); ++i) CHECK(run.client.decrypted[i].data == ref.layer_out[i].data);

  // conv: 9 mults, 8 adds; pool: 3 adds per cell over 2x4x4 cells; fc1: 32 mults; fc2: 8 mults
  const auto& st = run.server.circuit.stats;
  CHECK(st.n_point_mults == 2 * (9 + 32 + 8));
  CHECK(st.n_point_adds == 2 * (8 + 3 * 32 + (31 + 8) + (7 + 4)));
  CHECK(st.n_constraints == st.n_point_mults * 3464 + st.n_point_adds * 10);

  // offline re-verification of the recorded session
  const auto& frames = run.client.transcript.messages();
  CHECK(verify_transcript(frames, run.client.proof, run.client.cm).accept);
  Bytes cut(run.client.proof.begin(), run.client.proof.end() - 1);
  CHECK_FALSE(verify_transcript(frames, cut, run.client.cm).accept);
  auto other = cps::commit(std::vector<cps::Fq>{cps::Fq::one()}, u256(1), public_params(std::string(cps::kDomain), 4));
  CHECK_FALSE(verify_transcript(frames, run.client.proof, other).accept);

  // t[0] replaced by an encryption of 0 after the proof was made
  std::vector<Message> edited = frames;
  std::size_t ri = find(edited, MsgType::result);
  REQUIRE(ri < edited.size());
  Ahe ahe;
  Rng r(1);
  ahe.set_public_key(ahe.keygen(r).pk);
  auto zero = encode_ciphertext(ahe.enc(0, r));
  std::copy(zero.begin(), zero.end(), edited[ri].payload.begin() + 16);
  auto vr = verify_transcript(edited, run.client.proof, run.client.cm);
  CHECK_FALSE(vr.accept);
}

TEST_CASE("transcripts are reproducible from seeds") {
  Model m = toy();
  Sample s = toy_sample(m, 12);
  auto a = run_local(m, s, ccfg(7), scfg(8));
  auto b = run_local(m, s, ccfg(7), scfg(8));
  REQUIRE(a.client.outcome == Outcome::accepted);
  CHECK(a.client.transcript.bytes() == b.client.transcript.bytes());
  CHECK(a.client.transcript.digest() == b.client.transcript.digest());
  auto c = run_local(m, s, ccfg(9), scfg(8));
  CHECK_FALSE(a.client.transcript.digest() == c.client.transcript.digest());
}

TEST_CASE("interactive challenge mode") {
  Model m = toy();
  Sample s = toy_sample(m, 13);
  auto run = run_local(m, s, ccfg(3, true), scfg(4));
  INFO(run.client.reason);
  CHECK(run.client.outcome == Outcome::accepted);
  CHECK(find(run.client.transcript.messages(), MsgType::challenge) < run.client.transcript.messages().size());
  CHECK(run.client.logits == ref_infer(m, s.x).logits);
}

TEST_CASE("malicious servers are rejected") {
  Model m = toy();
  Sample s = toy_sample(m, 14);
  for (Attack a : {Attack::uncommitted_model, Attack::tampered_conv, Attack::tampered_fc, Attack::skipped_pool,
                   Attack::bitflip_proof}) {
    auto run = run_local(m, s, ccfg(21), scfg(22, a));
    INFO(to_string(a));
    INFO(run.client.reason);
    CHECK(run.client.outcome != Outcome::accepted);
    CHECK(run.client.logits.empty());
  }
}

TEST_CASE("server aborts a sample sent before the commitment") {
  Model m = toy();
  auto [a, b] = memory_pipe();
  ServerReport rep;
  std::thread t([&, ch = std::move(b)]() mutable { rep = serve_session(*ch, m, scfg(1)); });
  a->send(Message{MsgType::hello, {kVersion, 0}});
  CHECK(a->recv().type == MsgType::params);
  a->send(Message{MsgType::sample, Bytes(12, 0)});
  Message back = a->recv();
  CHECK(back.type == MsgType::abort);
  t.join();
  CHECK_FALSE(rep.completed);
  CHECK(rep.error.find("bad-state") != std::string::npos);
}

TEST_CASE("client rejects corrupted curve parameters") {
  Model m = toy();
  auto [a, b] = memory_pipe();
  std::thread t([&, ch = std::move(b)]() mutable {
    ch->recv();
    std::string e2 = params_to_json(e2_default());
    auto j = nlohmann::json::parse(e2);
    // a different b coefficient: the generator no longer satisfies the equation
    std::string bb = j["b_b64"];
    bb[bb.size() - 2] = bb[bb.size() - 2] == 'A' ? 'B' : 'A';
    j["b_b64"] = bb;
    nlohmann::json p = {{"version", kVersion}, {"e1", nlohmann::json::parse(params_to_json(e1_default()))}, {"e2", j},
                        {"domain", "x"}, {"max_len", 100}, {"arch", nlohmann::json::parse(arch_to_json(m))}};
    std::string txt = p.dump();
    ch->send(Message{MsgType::params, Bytes(txt.begin(), txt.end())});
    try {
      ch->recv();
    } catch (...) {
    }
  });
  auto rep = run_client(*a, toy_sample(m, 1), ccfg(1));
  a.reset();
  t.join();
  CHECK(rep.outcome == Outcome::aborted);
  CHECK(rep.reason.find("invalid-params") != std::string::npos);
}

TEST_CASE("client aborts on values beyond the decryptable range") {
  Model m = toy();
  for (auto& w : m.layers[0].conv.w) w = 1 << 26;
  Sample s = toy_sample(m, 2);
  auto run = run_local(m, s, ccfg(1), scfg(1));
  CHECK(run.client.outcome == Outcome::aborted);
  CHECK(run.client.reason.find("overflow") != std::string::npos);
  CHECK_FALSE(run.server.completed);
}

TEST_CASE("tcp loopback session") {
  Model m = toy();
  Sample s = toy_sample(m, 15);
  TcpListener lis(0);
  ServerReport srep;
  std::thread t([&] {
    auto ch = lis.accept();
    srep = serve_session(*ch, m, scfg(2));
  });
  auto ch = tcp_connect("127.0.0.1", lis.port());
  auto rep = run_client(*ch, s, ccfg(2));
  t.join();
  INFO(rep.reason);
  CHECK(rep.outcome == Outcome::accepted);
  CHECK(srep.completed);
  CHECK(rep.logits == ref_infer(m, s.x).logits);
}
