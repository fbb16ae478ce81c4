#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vpin/ahe.hpp"
#include "vpin/cpsnark.hpp"
#include "vpin/layers.hpp"
#include "vpin/model.hpp"
#include "vpin/rlc.hpp"

namespace vpin::proto {

inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::uint32_t kMaxFrame = 256u << 20;

enum class MsgType : std::uint8_t {
  hello = 1,
  params,
  pubkey,
  commit,
  sample,
  act_request,
  act_response,
  challenge,
  result,
  proof,
  abort,
};
const char* to_string(MsgType t);

struct Message {
  MsgType type = MsgType::hello;
  Bytes payload;
};

class ProtocolError : public std::runtime_error {
 public:
  enum class Code : std::uint8_t {
    io = 1,
    malformed,
    bad_state,
    invalid_params,
    overflow,
    shape_mismatch,
    proving_failed,
    peer_abort,
    internal,
  };
  ProtocolError(Code c, const std::string& what) : std::runtime_error(what), code(c) {}
  Code code;
};
const char* to_string(ProtocolError::Code c);

// 4-byte big-endian length (type byte + payload) || type || payload
Bytes frame(const Message& m);
// Parses exactly one frame; throws ProtocolError(malformed).
Message unframe(std::span<const std::uint8_t> bytes);
// Splits a concatenation of frames.
std::vector<Message> unframe_all(std::span<const std::uint8_t> bytes);

class Channel {
 public:
  virtual ~Channel() = default;
  virtual void send(const Message& m) = 0;
  virtual Message recv() = 0;  // throws ProtocolError(io) when the peer is gone
};

// Two connected in-memory endpoints.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> memory_pipe();

class TcpListener {
 public:
  explicit TcpListener(std::uint16_t port, const std::string& host = "127.0.0.1");
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;
  std::uint16_t port() const { return port_; }
  std::unique_ptr<Channel> accept();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};
std::unique_ptr<Channel> tcp_connect(const std::string& host, std::uint16_t port);

// Running hash over every frame either side sent or received, in wire order.
class Transcript {
 public:
  void append(const Message& m);
  Digest digest() const { return h_.peek(); }
  const std::vector<Message>& messages() const { return log_; }
  Bytes bytes() const;  // concatenated frames

 private:
  Sha256Stream h_;
  std::vector<Message> log_;
};

// Phases run Init -> Keyed -> Committed -> SampleSent -> (LayerDone, ActDone)* -> LayerDone(last)
// -> ChallengesFixed -> Proved -> Verified, with Aborted reachable from anywhere.
enum class Phase { init, keyed, committed, sample_sent, layer_done, act_done, challenges_fixed, proved, verified, aborted };
const char* to_string(Phase p);

class SessionState {
 public:
  explicit SessionState(std::size_t n_layers) : n_layers_(n_layers) {}
  Phase phase() const { return phase_; }
  std::size_t layer() const { return layer_; }  // layer the last layer_done / act_done refers to
  // throws ProtocolError(bad_state) on an out-of-order transition
  void advance(Phase next);
  void abort() { phase_ = Phase::aborted; }

 private:
  std::size_t n_layers_;
  Phase phase_ = Phase::init;
  std::size_t layer_ = 0;
};

// Public architecture: the model without weights, enough for the client to follow the session.
std::string arch_to_json(const Model& m);
Model arch_from_json(const std::string& text);  // weights are zero placeholders of the right size

// Everything the client sees, in the order it arrives.
struct SessionRecord {
  CTensor x;
  std::vector<CTensor> out;  // server output of every layer, FC outputs shaped (h, 1, 1)
  std::vector<CTensor> act;  // client round output of every layer but the last
  std::vector<std::vector<Ciphertext>> bias;  // bias ciphertexts per layer, empty for pools
};

// Coordinates of every bias ciphertext as (x, y, inf) triples for c1 then c2; committed as cm'.
std::vector<cps::Fq> aux_vector(const SessionRecord& rec);

std::string challenge_label(const Model& arch, std::size_t layer);
std::vector<rlc::Statement> build_statements(const Model& arch, const SessionRecord& rec, const Digest& seed);

// Process-wide cache; generators depend only on (domain, max_len).
const cps::PublicParams& public_params(const std::string& domain, std::size_t max_len);

enum class Attack { none, uncommitted_model, tampered_conv, tampered_fc, skipped_pool, bitflip_proof };
const char* to_string(Attack a);
std::optional<Attack> attack_from_string(const std::string& s);

struct ServerConfig {
  std::uint64_t seed = 0;
  bool seeded = false;
  Attack attack = Attack::none;
};

struct ServerReport {
  bool completed = false;
  std::string error;
  cps::CircuitReport circuit;
  double prove_seconds = 0;
  std::size_t proof_bytes = 0;
  SessionRecord record;  // what the server sent and received, for measurement
  Digest seed{};         // challenge seed the statements were built from
};

// Serves one session on ch. Never throws; protocol failures end in ABORT.
ServerReport serve_session(Channel& ch, const Model& model, const ServerConfig& cfg);

struct ClientConfig {
  std::uint64_t seed = 0;
  bool seeded = false;
  bool interactive = false;
  int bound_bits = kDefaultBoundBits;
  int baby_bits = 22;
  std::shared_ptr<const BsgsTable> table;  // built on demand when null
  std::optional<KeyPair> key;              // fresh key per session when absent
};

enum class Outcome { accepted, rejected, aborted };
const char* to_string(Outcome o);

struct ClientReport {
  Outcome outcome = Outcome::aborted;
  std::string reason;
  std::vector<std::int64_t> logits;  // only on accept
  int prediction = -1;
  std::vector<ITensor> decrypted;    // plaintexts the client saw in each activation round
  Transcript transcript;
  Bytes proof;
  cps::Commitment cm;
  double verify_seconds = 0;
  double total_seconds = 0;
};

ClientReport run_client(Channel& ch, const Sample& sample, const ClientConfig& cfg);

// Offline verification of a recorded session: the transcript frames plus the proof and model
// commitment under test (they replace whatever the transcript carried).
cps::VerifyResult verify_transcript(std::span<const Message> frames, std::span<const std::uint8_t> proof,
                                    const cps::Commitment& cm);

// Server and client in two threads over a memory pipe.
struct LocalRun {
  ClientReport client;
  ServerReport server;
};
LocalRun run_local(const Model& model, const Sample& sample, const ClientConfig& ccfg, const ServerConfig& scfg);

}  // namespace vpin::proto
