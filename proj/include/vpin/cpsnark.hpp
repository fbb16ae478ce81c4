#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vpin/curve.hpp"
#include "vpin/r1cs.hpp"
#include "vpin/util.hpp"

namespace vpin::cps {

using Fq = r1cs::Fq;  // committed values live in the E1 scalar field, the same field the circuit runs over

inline constexpr std::string_view kDomain = "vpin/pedersen/v1";
inline constexpr std::uint8_t kBackendReference = 1;

class CpsError : public std::runtime_error {
 public:
  enum class Code { length_exceeded, unsatisfied_circuit, malformed_proof, unknown_backend };
  CpsError(Code c, const std::string& what) : std::runtime_error(what), code(c) {}
  Code code;
};

struct PublicParams {
  std::string domain;
  std::uint8_t backend_id = kBackendReference;
  std::vector<E1Point> g;  // one per committed slot
  E1Point h;               // blinding generator
  std::size_t max_len() const { return g.size(); }
};

// Generators come from try-and-increment hashing of (domain, index, counter) onto E1, cleared of the
// cofactor. Deterministic in the domain string.
PublicParams setup(unsigned security_bits, std::size_t max_len, std::string_view domain = kDomain);
E1Point hash_to_curve(std::string_view domain, std::uint32_t index);

struct Commitment {
  E1Point point;
  friend bool operator==(const Commitment&, const Commitment&) = default;
};

// cm = r H + sum v_i G_i. Parallel MSM; commit_serial is the single-threaded reference.
Commitment commit(std::span<const Fq> values, const U256& r, const PublicParams& pp);
Commitment commit_serial(std::span<const Fq> values, const U256& r, const PublicParams& pp);

PointBytes encode_commitment(const Commitment& c);
Commitment decode_commitment(std::span<const std::uint8_t, 33> in);  // throws CpsError(malformed_proof)

struct Opening {
  std::vector<Fq> values;
  U256 blinding{};
};

// A circuit is a deterministic synthesizer: given the opened committed vectors it rebuilds every
// row and the full witness. Public data (statement points, targets) lives inside the object and is
// exposed through cs.alloc_public. Parts are independent sub-circuits that share only committed and
// public data, so prover and verifier may synthesize them in parallel.
class Circuit {
 public:
  virtual ~Circuit() = default;
  virtual std::size_t num_parts() const { return 1; }
  virtual void synthesize(r1cs::ConstraintSystem& cs, std::size_t part, std::span<const Opening> committed) const = 0;
};

class LambdaCircuit : public Circuit {
 public:
  using Fn = std::function<void(r1cs::ConstraintSystem&, std::span<const Opening>)>;
  explicit LambdaCircuit(Fn fn) : fn_(std::move(fn)) {}
  void synthesize(r1cs::ConstraintSystem& cs, std::size_t, std::span<const Opening> committed) const override {
    fn_(cs, committed);
  }

 private:
  Fn fn_;
};

struct ProofBundle {
  std::uint8_t backend_id = kBackendReference;
  Bytes payload;
  std::vector<Fq> public_inputs;  // the prover's view; verify compares it to the verifier's own
};

struct CircuitReport {
  r1cs::GadgetStats stats;  // summed over parts
  std::size_t num_public = 0;
};

// Synthesizes all parts in stream mode. Throws CpsError(unsatisfied_circuit) on a false statement,
// including a witness generator that hits a degenerate case.
ProofBundle prove(const Circuit& circuit, std::span<const Opening> committed, const PublicParams& pp,
                  CircuitReport* report = nullptr);

struct VerifyResult {
  bool accept = false;
  std::string reason;
  explicit operator bool() const { return accept; }
};

VerifyResult verify(const ProofBundle& proof, std::span<const Commitment> cms, std::span<const Fq> public_inputs,
                    const Circuit& circuit, const PublicParams& pp);

// Packs openings and public inputs into a reference-backend bundle without running the circuit.
// prove() calls this after synthesis succeeds; adversarial tests call it directly to forge proofs.
ProofBundle assemble_reference(std::span<const Opening> committed, std::vector<Fq> public_inputs);

// "VPIN" || backend_id || u32 payload length || payload; the reference payload carries the openings
// followed by the public input vector.
Bytes serialize(const ProofBundle& proof);
ProofBundle deserialize(std::span<const std::uint8_t> bytes);  // throws CpsError(malformed_proof)

// Openings carried by a reference-backend payload; throws CpsError(malformed_proof).
std::vector<Opening> reference_openings(const ProofBundle& proof);

// Runs every part and returns the concatenated public values plus stats, without any commitment
// checks. Used for counting and by prove/verify.
struct Synthesis {
  bool satisfied = true;
  std::string failure;
  std::vector<Fq> public_values;
  r1cs::GadgetStats stats;
};
Synthesis synthesize_all(const Circuit& circuit, std::span<const Opening> committed);

// signed integer -> field element, negative values wrap mod q1
inline Fq fq_of(std::int64_t v) { return Fq::from_i64(v); }

}  // namespace vpin::cps
