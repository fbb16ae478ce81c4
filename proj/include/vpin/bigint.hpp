#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace vpin {

// 256-bit unsigned integer, little-endian 64-bit limbs.
using U256 = std::array<std::uint64_t, 4>;

constexpr U256 u256(std::uint64_t v) { return {v, 0, 0, 0}; }

constexpr int cmp(const U256& a, const U256& b) {
  for (int i = 3; i >= 0; --i) {
    if (a[i] != b[i]) return a[i] < b[i] ? -1 : 1;
  }
  return 0;
}

constexpr bool is_zero(const U256& a) { return (a[0] | a[1] | a[2] | a[3]) == 0; }

// returns carry
constexpr std::uint64_t add_to(U256& a, const U256& b) {
  unsigned __int128 c = 0;
  for (int i = 0; i < 4; ++i) {
    c += static_cast<unsigned __int128>(a[i]) + b[i];
    a[i] = static_cast<std::uint64_t>(c);
    c >>= 64;
  }
  return static_cast<std::uint64_t>(c);
}

// returns borrow
constexpr std::uint64_t sub_from(U256& a, const U256& b) {
  std::uint64_t borrow = 0;
  for (int i = 0; i < 4; ++i) {
    std::uint64_t bi = b[i] + borrow;
    std::uint64_t nb = (bi < borrow) || (a[i] < bi) ? 1 : 0;
    a[i] -= bi;
    borrow = nb;
  }
  return borrow;
}

constexpr bool bit(const U256& a, unsigned i) { return (a[i / 64] >> (i % 64)) & 1; }

constexpr unsigned bit_length(const U256& a) {
  for (int i = 3; i >= 0; --i) {
    if (a[i]) return 64 * i + (64 - __builtin_clzll(a[i]));
  }
  return 0;
}

constexpr U256 shr(const U256& a, unsigned s) {
  U256 r{};
  unsigned limb = s / 64, b = s % 64;
  for (unsigned i = 0; i + limb < 4; ++i) {
    r[i] = a[i + limb] >> b;
    if (b && i + limb + 1 < 4) r[i] |= a[i + limb + 1] << (64 - b);
  }
  return r;
}

constexpr U256 shl(const U256& a, unsigned s) {
  U256 r{};
  unsigned limb = s / 64, b = s % 64;
  for (int i = 3; i >= static_cast<int>(limb); --i) {
    r[i] = a[i - limb] << b;
    if (b && i - static_cast<int>(limb) - 1 >= 0) r[i] |= a[i - limb - 1] >> (64 - b);
  }
  return r;
}

U256 u256_from_dec(std::string_view s);  // throws std::invalid_argument
std::string u256_to_dec(const U256& a);
U256 u256_from_be(std::span<const std::uint8_t> bytes);  // up to 32 bytes
void u256_to_be(const U256& a, std::span<std::uint8_t, 32> out);
// a mod m for an arbitrary 512-bit value given as two halves (hi*2^256 + lo)
U256 u512_mod(const U256& hi, const U256& lo, const U256& m);

}  // namespace vpin
