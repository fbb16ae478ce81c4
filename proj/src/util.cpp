#include "vpin/util.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>

#include <stdexcept>

namespace vpin {

std::string base64_encode(std::span<const std::uint8_t> data) {
  std::string out(4 * ((data.size() + 2) / 3) + 1, '\0');
  int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data.data(), static_cast<int>(data.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::optional<Bytes> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) return std::nullopt;
  if (text.empty()) return Bytes{};
  Bytes out(text.size() / 4 * 3 + 1);
  int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (n < 0) return std::nullopt;
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding
  std::size_t pad = 0;
  if (text.back() == '=') ++pad;
  if (text.size() >= 2 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

Digest sha256(std::span<const std::uint8_t> data) {
  Digest d;
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), d.data(), &len, EVP_sha256(), nullptr);
  return d;
}

Digest hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> msg) {
  Digest d;
  unsigned int len = 0;
  HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), msg.data(), msg.size(), d.data(), &len);
  return d;
}

Sha256Stream::Sha256Stream() : ctx_(EVP_MD_CTX_new()) {
  EVP_DigestInit_ex(static_cast<EVP_MD_CTX*>(ctx_), EVP_sha256(), nullptr);
}
Sha256Stream::~Sha256Stream() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_)); }
Sha256Stream::Sha256Stream(const Sha256Stream& o) : ctx_(EVP_MD_CTX_new()) {
  EVP_MD_CTX_copy_ex(static_cast<EVP_MD_CTX*>(ctx_), static_cast<EVP_MD_CTX*>(o.ctx_));
}
Sha256Stream& Sha256Stream::operator=(const Sha256Stream& o) {
  if (this != &o) EVP_MD_CTX_copy_ex(static_cast<EVP_MD_CTX*>(ctx_), static_cast<EVP_MD_CTX*>(o.ctx_));
  return *this;
}
void Sha256Stream::update(std::span<const std::uint8_t> data) {
  EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data.data(), data.size());
}
Digest Sha256Stream::peek() const {
  EVP_MD_CTX* copy = EVP_MD_CTX_new();
  EVP_MD_CTX_copy_ex(copy, static_cast<EVP_MD_CTX*>(ctx_));
  Digest d;
  unsigned int len = 0;
  EVP_DigestFinal_ex(copy, d.data(), &len);
  EVP_MD_CTX_free(copy);
  return d;
}

std::string to_hex(std::span<const std::uint8_t> data) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(data.size() * 2);
  for (auto b : data) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 15]);
  }
  return s;
}

void put_u32be(Bytes& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32be(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

Rng::Rng() {
  std::array<std::uint8_t, 32> key;
  if (RAND_bytes(key.data(), 32) != 1) throw std::runtime_error("RAND_bytes failed");
  init(key);
}

Rng::Rng(std::uint64_t seed) {
  std::array<std::uint8_t, 8> s;
  for (int i = 0; i < 8; ++i) s[i] = static_cast<std::uint8_t>(seed >> (8 * i));
  Digest key = sha256(s);
  init(key);
}

Rng::Rng(std::span<const std::uint8_t> seed) {
  Digest key = sha256(seed);
  init(key);
}

Rng::Rng(Rng&& o) noexcept : ctx_(o.ctx_) { o.ctx_ = nullptr; }

Rng::~Rng() {
  if (ctx_) EVP_CIPHER_CTX_free(static_cast<EVP_CIPHER_CTX*>(ctx_));
}

void Rng::init(std::span<const std::uint8_t, 32> key) {
  auto* ctx = EVP_CIPHER_CTX_new();
  std::array<std::uint8_t, 16> iv{};
  if (!ctx || EVP_EncryptInit_ex(ctx, EVP_chacha20(), nullptr, key.data(), iv.data()) != 1) {
    throw std::runtime_error("chacha20 init failed");
  }
  ctx_ = ctx;
}

void Rng::fill(std::span<std::uint8_t> out) {
  static const std::array<std::uint8_t, 256> zeros{};
  std::size_t off = 0;
  while (off < out.size()) {
    int n = static_cast<int>(std::min<std::size_t>(zeros.size(), out.size() - off));
    int outl = 0;
    EVP_EncryptUpdate(static_cast<EVP_CIPHER_CTX*>(ctx_), out.data() + off, &outl, zeros.data(), n);
    off += static_cast<std::size_t>(n);
  }
}

std::uint64_t Rng::next_u64() {
  std::array<std::uint8_t, 8> b;
  fill(b);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return v;
}

std::uint64_t Rng::uniform(std::uint64_t bound) {
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  for (;;) {
    std::uint64_t v = next_u64();
    if (v < limit) return v % bound;
  }
}

U256 Rng::scalar_below(const U256& n) {
  unsigned bits = bit_length(n);
  for (;;) {
    U256 v{next_u64(), next_u64(), next_u64(), next_u64()};
    if (bits < 256) {
      for (unsigned i = bits; i < 256; ++i) v[i / 64] &= ~(1ull << (i % 64));
    }
    if (!is_zero(v) && cmp(v, n) < 0) return v;
  }
}

Rng Rng::fork() {
  std::array<std::uint8_t, 32> key;
  fill(key);
  Rng r(key);
  return r;
}

}  // namespace vpin
