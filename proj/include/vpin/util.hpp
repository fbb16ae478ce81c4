#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vpin/bigint.hpp"

namespace vpin {

using Bytes = std::vector<std::uint8_t>;
using Digest = std::array<std::uint8_t, 32>;

std::string base64_encode(std::span<const std::uint8_t> data);
// std::nullopt on malformed input
std::optional<Bytes> base64_decode(std::string_view text);

Digest sha256(std::span<const std::uint8_t> data);
Digest hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> msg);

class Sha256Stream {
 public:
  Sha256Stream();
  ~Sha256Stream();
  Sha256Stream(const Sha256Stream& o);
  Sha256Stream& operator=(const Sha256Stream& o);
  void update(std::span<const std::uint8_t> data);
  Digest peek() const;  // digest so far; the stream stays usable

 private:
  void* ctx_;
};

std::string to_hex(std::span<const std::uint8_t> data);

inline std::span<const std::uint8_t> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

void put_u32be(Bytes& out, std::uint32_t v);
std::uint32_t get_u32be(const std::uint8_t* p);

// Deterministic when seeded (ChaCha20 keystream keyed by SHA-256 of the seed), OS entropy otherwise.
class Rng {
 public:
  Rng();
  explicit Rng(std::uint64_t seed);
  explicit Rng(std::span<const std::uint8_t> seed);
  ~Rng();
  Rng(const Rng&) = delete;
  Rng& operator=(const Rng&) = delete;
  Rng(Rng&& o) noexcept;

  void fill(std::span<std::uint8_t> out);
  std::uint64_t next_u64();
  // uniform in [0, bound), bound > 0
  std::uint64_t uniform(std::uint64_t bound);
  // uniform in [1, n) by rejection
  U256 scalar_below(const U256& n);
  Rng fork();

 private:
  void init(std::span<const std::uint8_t, 32> key);
  void* ctx_ = nullptr;
};

}  // namespace vpin
