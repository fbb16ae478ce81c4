// vpin: key generation, constraint counting, benchmarking, and the TCP client/server.
//
// Exit codes: 0 ok, 1 verification reject, 2 usage, 3 protocol abort.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "vpin/accounting.hpp"

using namespace vpin;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0, kReject = 1, kUsage = 2, kAbort = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string network, dataset = "mnist", model_file, sample_file, out;
  std::uint64_t seed = 0;
  int f = 16;
};

Rng make_rng(const CLI::App& app, std::uint64_t seed) { return app.count("--seed") ? Rng(seed) : Rng(); }

Model load_or_make(const Common& o, Rng& rng) {
  if (!o.model_file.empty()) {
    if (!fs::exists(o.model_file)) throw UsageError("model file not found: " + o.model_file);
    return load_model(o.model_file);
  }
  if (o.network.empty()) throw UsageError("need --model or --network");
  if (!known_network(o.network)) throw UsageError("unknown network " + o.network);
  if (o.dataset != "mnist" && o.dataset != "cifar10") throw UsageError("unknown dataset " + o.dataset);
  return make_network(o.network, rng, o.f, o.dataset == "cifar10" ? 3 : 1);
}

Sample load_or_random(const std::string& path, const Model& m, Rng& rng) {
  if (!path.empty()) {
    if (!fs::exists(path)) throw UsageError("sample file not found: " + path);
    return load_sample(path);
  }
  Sample s;
  s.f = m.f;
  s.x = ITensor(m.in_ch, m.in_h, m.in_w);
  for (auto& v : s.x.data) v = static_cast<std::int64_t>(rng.uniform(std::uint64_t(1) << m.f));
  return s;
}

Bytes read_bytes(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("file not found: " + path);
  std::string s = read_file(path);
  return Bytes(s.begin(), s.end());
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> b) {
  write_file(path.string(), std::string(b.begin(), b.end()));
}

void emit(const Common& o, const std::string& name, const json& j) {
  if (o.out.empty()) return;
  fs::create_directories(o.out);
  write_file((fs::path(o.out) / name).string(), j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------------------------

int cmd_keygen(const Common& o, Rng& rng) {
  if (o.out.empty()) throw UsageError("keygen needs --out DIR");
  Ahe ahe;
  KeyPair kp = ahe.keygen(rng);
  fs::create_directories(o.out);
  auto sk = encode_secret_key(kp.sk);
  auto pk = encode_point(kp.pk);
  write_bytes(fs::path(o.out) / "sk.bin", sk);
  write_bytes(fs::path(o.out) / "pk.bin", pk);
  std::cout << "pk " << to_hex(pk) << "\n";
  return kOk;
}

KeyPair load_key(const std::string& dir) {
  Bytes skb = read_bytes((fs::path(dir) / "sk.bin").string());
  if (skb.size() != 32) throw UsageError("sk.bin must be 32 bytes");
  KeyPair kp;
  kp.sk = decode_secret_key(std::span<const std::uint8_t, 32>(skb.data(), 32));
  const E2Params& c = e2_default();
  kp.pk = pt_mul(c, kp.sk, c.g);
  fs::path pkp = fs::path(dir) / "pk.bin";
  if (fs::exists(pkp)) {
    Bytes pkb = read_bytes(pkp.string());
    if (pkb.size() != 33 || !std::equal(pkb.begin(), pkb.end(), encode_point(kp.pk).begin())) {
      throw UsageError("pk.bin does not match sk.bin");
    }
  }
  return kp;
}

int cmd_count(const Common& o) {
  if (o.network.empty()) throw UsageError("count needs --network");
  if (!known_network(o.network) || o.network == "toy") throw UsageError("unknown network " + o.network);
  if (o.dataset != "mnist" && o.dataset != "cifar10") throw UsageError("unknown dataset " + o.dataset);
  auto r = acct::count_network(o.network, o.dataset);
  std::cout << acct::to_table(r);
  emit(o, "count.json", json::parse(acct::to_json(r)));
  return kOk;
}

json profile_json(const acct::Profile& p) {
  json layers = json::array();
  for (const auto& l : p.layers) {
    layers.push_back({{"layer", l.layer},
                      {"point_mults", l.mults},
                      {"point_adds", l.adds},
                      {"constraints", acct::constraints(l.mults, l.adds)}});
  }
  return {{"layers", layers},
          {"point_mults", p.mults()},
          {"point_adds", p.adds()},
          {"constraints", acct::constraints(p.mults(), p.adds())}};
}

int cmd_bench(const Common& o, const std::string& mode, int baby_bits, Rng& rng) {
  if (mode != "vpin" && mode != "baseline-wce") throw UsageError("--mode must be vpin or baseline-wce");
  Model m = load_or_make(o, rng);
  Sample s = load_or_random(o.sample_file, m, rng);
  if (mode == "baseline-wce" && (m.in_h > 8 || m.in_w > 8)) {
    std::cerr << "out-of-budget: baseline-wce runs only on inputs up to 8x8 (this model takes " << m.in_h << "x"
              << m.in_w << ")\n";
    return kUsage;
  }

  proto::ClientConfig cc;
  cc.seeded = true;
  cc.seed = rng.next_u64();
  cc.baby_bits = baby_bits;
  proto::ServerConfig sc;
  sc.seeded = true;
  sc.seed = rng.next_u64();
  auto run = proto::run_local(m, s, cc, sc);
  if (run.client.outcome != proto::Outcome::accepted) {
    std::cerr << "session " << to_string(run.client.outcome) << ": " << run.client.reason << "\n";
    return run.client.outcome == proto::Outcome::rejected ? kReject : kAbort;
  }

  json j;
  j["network"] = m.name;
  j["mode"] = mode;
  j["logits"] = run.client.logits;
  j["session_seconds"] = run.client.total_seconds;
  const auto closed = acct::circuit_profile(m);
  std::uint64_t mults = 0, adds = 0, rows = 0;
  bool verified = false;

  if (mode == "vpin") {
    const auto& st = run.server.circuit.stats;
    mults = st.n_point_mults;
    adds = st.n_point_adds;
    rows = st.n_constraints;
    verified = true;
    j["closed_form"] = profile_json(closed);
    j["prove_seconds"] = run.server.prove_seconds;
    j["verify_seconds"] = run.client.verify_seconds;
    j["proof_bytes"] = run.server.proof_bytes;
  } else {
    // rebuild the per-cell circuit over the same recorded session
    std::vector<cps::Fq> mv;
    for (auto w : model_vector(m)) mv.push_back(cps::fq_of(w));
    std::vector<cps::Opening> open{cps::Opening{mv, rng.scalar_below(e1_default().order)}};
    const auto& pp = proto::public_params(std::string(cps::kDomain), mv.size());
    std::vector<cps::Commitment> cms{cps::commit(open[0].values, open[0].blinding, pp)};
    acct::BaselineCircuit bc(acct::baseline_statements(m, run.server.record));
    auto t0 = std::chrono::steady_clock::now();
    cps::CircuitReport rep;
    auto proof = cps::prove(bc, open, pp, &rep);
    double prove_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    t0 = std::chrono::steady_clock::now();
    verified = cps::verify(proof, cms, proof.public_inputs, bc, pp).accept;
    double verify_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    mults = rep.stats.n_point_mults;
    adds = rep.stats.n_point_adds;
    rows = rep.stats.n_constraints;
    j["closed_form"] = profile_json(acct::baseline_profile(m));
    j["prove_seconds"] = prove_s;
    j["verify_seconds"] = verify_s;
    j["proof_bytes"] = cps::serialize(proof).size();
    const auto& vs = run.server.circuit.stats;
    j["vpin_constraints"] = vs.n_constraints;
    j["reduction"] = double(rows) / double(vs.n_constraints);
  }
  const auto& cf = j["closed_form"];
  bool match = cf["point_mults"] == mults && cf["point_adds"] == adds;
  j["measured"] = {{"point_mults", mults}, {"point_adds", adds}, {"constraints", rows}};
  j["counts_match_closed_form"] = match;
  j["verified"] = verified;

  std::printf("%s %s: %llu mults, %llu adds, %llu constraints (closed form %s)\n", m.name.c_str(), mode.c_str(),
              (unsigned long long)mults, (unsigned long long)adds, (unsigned long long)rows,
              match ? "matches" : "DIFFERS");
  std::printf("prove %.2f s, verify %.2f s, proof %zu bytes, %s\n", j["prove_seconds"].get<double>(),
              j["verify_seconds"].get<double>(), j["proof_bytes"].get<std::size_t>(),
              verified ? "verified" : "REJECTED");
  if (j.contains("reduction")) std::printf("baseline / vpin constraints: %.1fx\n", j["reduction"].get<double>());
  emit(o, "bench.json", j);
  return verified && match ? kOk : kReject;
}

int cmd_serve(const Common& o, const std::string& host, std::uint16_t port, const std::string& attack, int sessions,
              Rng& rng, bool seeded) {
  Model m = load_or_make(o, rng);
  auto at = proto::attack_from_string(attack);
  if (!at) throw UsageError("unknown attack " + attack);
  trace_shapes(m);
  proto::TcpListener lis(port, host);
  std::cerr << "serving " << m.name << " (" << num_parameters(m) << " parameters) on " << host << ":" << lis.port()
            << "\n";
  std::vector<std::thread> workers;
  for (int i = 0; sessions == 0 || i < sessions; ++i) {
    std::unique_ptr<proto::Channel> ch;
    try {
      ch = lis.accept();
    } catch (const std::exception& e) {
      std::cerr << "accept: " << e.what() << "\n";
      continue;
    }
    proto::ServerConfig sc;
    sc.seeded = seeded;
    sc.seed = rng.next_u64();
    sc.attack = *at;
    workers.emplace_back([&m, sc, i, ch = std::move(ch)]() mutable {
      auto rep = proto::serve_session(*ch, m, sc);
      if (rep.completed) {
        std::fprintf(stderr, "session %d: proved %llu constraints in %.2f s, proof %zu bytes\n", i,
                     (unsigned long long)rep.circuit.stats.n_constraints, rep.prove_seconds, rep.proof_bytes);
      } else {
        std::fprintf(stderr, "session %d: aborted: %s\n", i, rep.error.c_str());
      }
    });
  }
  for (auto& t : workers) t.join();
  return kOk;
}

int cmd_infer(const Common& o, const std::string& host, std::uint16_t port, bool interactive, int baby_bits,
              const std::string& key_dir, const CLI::App& app) {
  if (!fs::exists(o.sample_file)) throw UsageError("sample file not found: " + o.sample_file);
  Sample s = load_sample(o.sample_file);
  proto::ClientConfig cc;
  cc.seeded = app.count("--seed") > 0;
  cc.seed = o.seed;
  cc.interactive = interactive;
  cc.baby_bits = baby_bits;
  if (!key_dir.empty()) cc.key = load_key(key_dir);
  auto ch = proto::tcp_connect(host, port);
  auto rep = proto::run_client(*ch, s, cc);

  if (!o.out.empty()) {
    fs::path d(o.out);
    fs::create_directories(d);
    write_bytes(d / "proof.bin", rep.proof);
    auto cmb = cps::encode_commitment(rep.cm);
    write_bytes(d / "commitment.bin", cmb);
    write_bytes(d / "transcript.bin", rep.transcript.bytes());
  }
  json j = {{"outcome", to_string(rep.outcome)},
            {"reason", rep.reason},
            {"logits", rep.logits},
            {"prediction", rep.prediction},
            {"verify_seconds", rep.verify_seconds},
            {"total_seconds", rep.total_seconds}};
  emit(o, "logits.json", j);
  if (rep.outcome == proto::Outcome::accepted) {
    std::cout << "accepted; prediction " << rep.prediction << "; logits";
    for (auto v : rep.logits) std::cout << " " << v;
    std::cout << "\n";
    return kOk;
  }
  std::cerr << to_string(rep.outcome) << ": " << rep.reason << "\n";
  return rep.outcome == proto::Outcome::rejected ? kReject : kAbort;
}

int cmd_verify(const std::string& dir, std::string transcript, std::string proof, std::string cm) {
  if (!dir.empty()) {
    if (transcript.empty()) transcript = (fs::path(dir) / "transcript.bin").string();
    if (proof.empty()) proof = (fs::path(dir) / "proof.bin").string();
    if (cm.empty()) cm = (fs::path(dir) / "commitment.bin").string();
  }
  if (transcript.empty() || proof.empty() || cm.empty()) {
    throw UsageError("verify needs --dir or all of --transcript, --proof, --cm");
  }
  Bytes tb = read_bytes(transcript), pb = read_bytes(proof), cb = read_bytes(cm);
  cps::VerifyResult vr;
  try {
    if (cb.size() != 33) throw cps::CpsError(cps::CpsError::Code::malformed_proof, "commitment must be 33 bytes");
    auto frames = proto::unframe_all(tb);
    vr = proto::verify_transcript(frames, pb, cps::decode_commitment(std::span<const std::uint8_t, 33>(cb.data(), 33)));
  } catch (const std::exception& e) {
    vr.accept = false;
    vr.reason = e.what();
  }
  if (vr) {
    std::cout << "accept\n";
    return kOk;
  }
  std::cout << "reject: " << vr.reason << "\n";
  return kReject;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vpin: verifiable private CNN inference"};
  app.require_subcommand(1);
  app.fallthrough();
  Common o;
  app.add_option("--seed", o.seed, "seed for all randomness (reproducible transcripts)");
  app.add_option("--out", o.out, "output directory");

  auto* kg = app.add_subcommand("keygen", "write sk.bin (32 bytes) and pk.bin (33 bytes) to --out");

  auto* count = app.add_subcommand("count", "closed-form point op and constraint counts");
  count->add_option("--network", o.network, "A..E or lenet")->required();
  count->add_option("--dataset", o.dataset, "mnist or cifar10");

  std::string mode = "vpin";
  int baby_bits = 22;
  auto* bench = app.add_subcommand("bench", "run a full local session and report counts and timings");
  bench->add_option("--network", o.network, "A..E, lenet or toy (random weights)");
  bench->add_option("--model", o.model_file, "model JSON (overrides --network)");
  bench->add_option("--sample", o.sample_file, "sample JSON (random when absent)");
  bench->add_option("--dataset", o.dataset, "mnist or cifar10");
  bench->add_option("--mode", mode, "vpin or baseline-wce");
  bench->add_option("--frac-bits", o.f, "fixed-point scale for generated networks");
  bench->add_option("--baby-bits", baby_bits, "log2 of the decryption table size");

  std::string host = "127.0.0.1", attack = "none";
  std::uint16_t port = 7878;
  int sessions = 0;
  auto* serve = app.add_subcommand("serve", "serve a model over TCP, one thread per session");
  serve->add_option("--model", o.model_file, "model JSON");
  serve->add_option("--network", o.network, "generate a random-weight network instead");
  serve->add_option("--dataset", o.dataset, "mnist or cifar10");
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--sessions", sessions, "stop after this many sessions (0 = forever)");
  serve->add_option("--attack", attack, "misbehave for testing: uncommitted-model, tampered-conv, ...");

  bool interactive = false;
  std::string key_dir;
  auto* infer = app.add_subcommand("infer", "encrypt a sample, run the session, verify, decrypt");
  infer->add_option("--sample", o.sample_file, "sample JSON")->required();
  infer->add_option("--host", host);
  infer->add_option("--port", port);
  infer->add_option("--key", key_dir, "directory holding sk.bin/pk.bin (fresh key when absent)");
  infer->add_flag("--interactive-challenge", interactive, "send a random challenge instead of Fiat-Shamir");
  infer->add_option("--baby-bits", baby_bits, "log2 of the decryption table size");

  std::string vdir, vtr, vproof, vcm;
  auto* verify = app.add_subcommand("verify", "re-verify a recorded session offline");
  verify->add_option("--dir", vdir, "directory written by infer --out");
  verify->add_option("--transcript", vtr);
  verify->add_option("--proof", vproof);
  verify->add_option("--cm", vcm);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  Rng rng = make_rng(app, o.seed);
  try {
    if (*kg) return cmd_keygen(o, rng);
    if (*count) return cmd_count(o);
    if (*bench) return cmd_bench(o, mode, baby_bits, rng);
    if (*serve) return cmd_serve(o, host, port, attack, sessions, rng, app.count("--seed") > 0);
    if (*infer) return cmd_infer(o, host, port, interactive, baby_bits, key_dir, app);
    if (*verify) return cmd_verify(vdir, vtr, vproof, vcm);
  } catch (const UsageError& e) {
    std::cerr << "usage: " << e.what() << "\n";
    return kUsage;
  } catch (const ModelError& e) {
    std::cerr << "usage: " << e.what() << "\n";
    return kUsage;
  } catch (const proto::ProtocolError& e) {
    std::cerr << "abort: " << to_string(e.code) << ": " << e.what() << "\n";
    return kAbort;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kAbort;
  }
  return kUsage;
}
