#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "vpin/curve.hpp"
#include "vpin/util.hpp"

namespace vpin {

// Exponential ElGamal over E2: c1 = r*G, c2 = m*G + r*pk.
struct Ciphertext {
  E2Point c1, c2;
  friend bool operator==(const Ciphertext&, const Ciphertext&) = default;
};

using CiphertextBytes = std::array<std::uint8_t, 66>;

struct KeyPair {
  U256 sk{};
  E2Point pk;
};

class AheError : public std::runtime_error {
 public:
  enum class Code { plaintext_out_of_range, dlog_not_found, overflow, bad_encoding };
  AheError(Code c, const std::string& what) : std::runtime_error(what), code(c) {}
  Code code;
};

constexpr int kDefaultFracBits = 16;
constexpr int kDefaultBoundBits = 35;
constexpr int kDefaultBabyBits = 18;

// Discrete log table for m*G2 with |m| < 2^bound_bits. Entries hold the x fingerprint of j*G for
// j in [1, 2^baby_bits] plus the parity of y, so one lookup answers for both j*G and -j*G.
class BsgsTable {
 public:
  BsgsTable(const E2Params& c, int baby_bits = kDefaultBabyBits);
  int baby_bits() const { return baby_bits_; }
  // Solves a whole batch with lockstep giant steps sharing one inversion per step.
  std::vector<std::optional<std::int64_t>> dlog_batch(std::span<const E2Point> ms, int bound_bits) const;
  std::optional<std::int64_t> dlog(const E2Point& m, int bound_bits) const;

 private:
  // j in [1, B] and sign (+1 / -1) or nothing
  bool lookup(const E2Point& p, std::int64_t& t) const;

  const E2Params* c_;
  int baby_bits_;
  std::uint64_t stride_;   // 2B + 1
  E2Point step_;           // stride * G
  std::uint64_t mask_;
  std::vector<std::uint64_t> keys_;
  std::vector<std::uint32_t> vals_;  // j | parity << 31; 0 = empty
};

// Shared encryption context for one public key.
class Ahe {
 public:
  explicit Ahe(const E2Params& c = e2_default());
  const E2Params& curve() const { return *c_; }

  KeyPair keygen(Rng& rng) const;
  void set_public_key(const E2Point& pk);
  const E2Point& public_key() const { return pk_; }

  Ciphertext enc(std::int64_t m, Rng& rng, int bound_bits = kDefaultBoundBits) const;
  // Batched, OpenMP-parallel over chunks; randomness drawn sequentially from rng so the output
  // does not depend on the thread count.
  std::vector<Ciphertext> enc_many(std::span<const std::int64_t> ms, Rng& rng, int bound_bits = kDefaultBoundBits) const;
  Ciphertext enc_with(std::int64_t m, const U256& r) const;

  // m*G via the fixed-base table
  E2Point encode_plain(std::int64_t m) const;

  Ciphertext add(const Ciphertext& a, const Ciphertext& b) const;
  Ciphertext sub(const Ciphertext& a, const Ciphertext& b) const;
  Ciphertext neg(const Ciphertext& a) const;
  Ciphertext scal_mul(std::int64_t s, const Ciphertext& a) const;
  Ciphertext scal_mul(const U256& s, const Ciphertext& a) const;

  const FixedBaseTable<FeQ1>& g_table() const { return g_table_; }

 private:
  const E2Params* c_;
  FixedBaseTable<FeQ1> g_table_;
  E2Point pk_;
  FixedBaseTable<FeQ1> pk_table_;
};

class Decryptor {
 public:
  Decryptor(const U256& sk, std::shared_ptr<const BsgsTable> table, const E2Params& c = e2_default());
  // c2 - sk*c1
  E2Point unmask(const Ciphertext& ct) const;
  std::int64_t dec(const Ciphertext& ct, int bound_bits = kDefaultBoundBits) const;
  // throws AheError(dlog_not_found) naming the first failing index
  std::vector<std::int64_t> dec_many(std::span<const Ciphertext> cts, int bound_bits = kDefaultBoundBits) const;
  const BsgsTable& table() const { return *table_; }

 private:
  const E2Params* c_;
  U256 sk_;
  std::shared_ptr<const BsgsTable> table_;
};

CiphertextBytes encode_ciphertext(const Ciphertext& c);
// throws AheError(bad_encoding)
Ciphertext decode_ciphertext(const E2Params& c, std::span<const std::uint8_t, 66> in);

std::array<std::uint8_t, 32> encode_secret_key(const U256& sk);
U256 decode_secret_key(std::span<const std::uint8_t, 32> in);  // throws if zero or >= q2

// fixed-point codec
std::int64_t fp_encode(double x, int f, int bound_bits = 62);  // round half to even; AheError(overflow)
double fp_decode(std::int64_t v, int f);
inline std::int64_t truncate(std::int64_t v, int zeta) { return v >> zeta; }  // arithmetic shift = floor

}  // namespace vpin
