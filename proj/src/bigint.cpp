#include "vpin/bigint.hpp"

#include <gmp.h>

#include <stdexcept>

#include "vpin/field.hpp"

namespace vpin {

namespace {

void load(mpz_t z, const U256& a) { mpz_import(z, 4, -1, sizeof(std::uint64_t), 0, 0, a.data()); }

U256 store(const mpz_t z) {
  U256 r{};
  if (mpz_sizeinbase(z, 2) > 256) throw std::overflow_error("value exceeds 256 bits");
  std::size_t count = 0;
  mpz_export(r.data(), &count, -1, sizeof(std::uint64_t), 0, 0, z);
  return r;
}

struct Mpz {
  mpz_t z;
  Mpz() { mpz_init2(z, 512); }
  ~Mpz() { mpz_clear(z); }
  Mpz(const Mpz&) = delete;
  Mpz& operator=(const Mpz&) = delete;
};

}  // namespace

U256 u256_from_dec(std::string_view s) {
  if (s.empty() || s.size() > 80) throw std::invalid_argument("bad decimal integer");
  for (char c : s) {
    if (c < '0' || c > '9') throw std::invalid_argument("bad decimal integer");
  }
  Mpz m;
  std::string tmp(s);
  mpz_set_str(m.z, tmp.c_str(), 10);
  return store(m.z);
}

std::string u256_to_dec(const U256& a) {
  Mpz m;
  load(m.z, a);
  std::string out(mpz_sizeinbase(m.z, 10) + 2, '\0');
  mpz_get_str(out.data(), 10, m.z);
  out.resize(std::char_traits<char>::length(out.c_str()));
  return out;
}

U256 u256_from_be(std::span<const std::uint8_t> bytes) {
  if (bytes.size() > 32) throw std::invalid_argument("more than 32 bytes");
  U256 r{};
  std::size_t n = bytes.size();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t pos = n - 1 - i;  // byte significance
    r[pos / 8] |= static_cast<std::uint64_t>(bytes[i]) << (8 * (pos % 8));
  }
  return r;
}

void u256_to_be(const U256& a, std::span<std::uint8_t, 32> out) {
  for (std::size_t pos = 0; pos < 32; ++pos) {
    out[31 - pos] = static_cast<std::uint8_t>(a[pos / 8] >> (8 * (pos % 8)));
  }
}

U256 u512_mod(const U256& hi, const U256& lo, const U256& m) {
  Mpz a, b, mod;
  load(a.z, hi);
  mpz_mul_2exp(a.z, a.z, 256);
  load(b.z, lo);
  mpz_add(a.z, a.z, b.z);
  load(mod.z, m);
  mpz_mod(a.z, a.z, mod.z);
  return store(a.z);
}

namespace detail {

U256 invert_mod(const U256& a, const U256& p) {
  thread_local Mpz x, mod, r;
  load(x.z, a);
  load(mod.z, p);
  if (!mpz_invert(r.z, x.z, mod.z)) throw std::domain_error("not invertible");
  return store(r.z);
}

}  // namespace detail

}  // namespace vpin
