#include "vpin/ahe.hpp"

#include <omp.h>

#include <cmath>

namespace vpin {

namespace {

std::uint64_t fingerprint(const FeQ1& x) { return x.mont()[0]; }
std::uint32_t parity(const FeQ1& y) { return static_cast<std::uint32_t>(y.mont()[0] & 1); }

std::size_t slot(std::uint64_t key, std::uint64_t mask) {
  return static_cast<std::size_t>((key * 0x9E3779B97F4A7C15ull) >> 20) & mask;
}

constexpr std::size_t kChunk = 1 << 12;

}  // namespace

// ---------------------------------------------------------------------------
// BSGS

BsgsTable::BsgsTable(const E2Params& c, int baby_bits) : c_(&c), baby_bits_(baby_bits) {
  if (baby_bits < 4 || baby_bits > 28) throw std::invalid_argument("baby_bits out of range");
  const std::uint64_t B = 1ull << baby_bits;
  stride_ = 2 * B + 1;
  step_ = pt_mul(c, u256(stride_), c.g);
  std::size_t cap = std::size_t{1} << (baby_bits + 1);
  mask_ = cap - 1;
  keys_.assign(cap, 0);
  vals_.assign(cap, 0);

  std::size_t chunks = (B + kChunk - 1) / kChunk;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t ch = 0; ch < chunks; ++ch) {
    std::uint64_t first = ch * kChunk + 1;
    std::uint64_t count = std::min<std::uint64_t>(kChunk, B - first + 1);
    std::vector<JacPoint<FeQ1>> js(count);
    js[0] = jac_mul(c, u256(first), c.g);
    for (std::uint64_t i = 1; i < count; ++i) js[i] = jac_add_mixed(c, js[i - 1], c.g);
    auto aff = batch_to_affine<FeQ1>(js);
#pragma omp critical(bsgs_insert)
    for (std::uint64_t i = 0; i < count; ++i) {
      std::uint64_t key = fingerprint(aff[i].x);
      std::size_t s = slot(key, mask_);
      while (vals_[s] != 0) s = (s + 1) & mask_;
      keys_[s] = key;
      vals_[s] = static_cast<std::uint32_t>(first + i) | (parity(aff[i].y) << 31);
    }
  }
}

bool BsgsTable::lookup(const E2Point& p, std::int64_t& t) const {
  std::uint64_t key = fingerprint(p.x);
  for (std::size_t s = slot(key, mask_); vals_[s] != 0; s = (s + 1) & mask_) {
    if (keys_[s] != key) continue;
    std::uint32_t v = vals_[s];
    std::int64_t j = v & 0x7fffffff;
    t = (v >> 31) == parity(p.y) ? j : -j;
    return true;
  }
  return false;
}

std::vector<std::optional<std::int64_t>> BsgsTable::dlog_batch(std::span<const E2Point> ms, int bound_bits) const {
  if (bound_bits > 40) throw std::invalid_argument("bound_bits above 40");
  const std::size_t n = ms.size();
  std::vector<std::optional<std::int64_t>> out(n);
  const std::int64_t bound = std::int64_t{1} << bound_bits;
  const std::uint64_t steps = static_cast<std::uint64_t>(bound) / stride_ + 1;
  const E2Point neg_step = pt_neg(step_);

  // the candidate is confirmed against m*G so a fingerprint collision can never yield a wrong answer
  auto confirm = [&](std::size_t idx, std::int64_t m) {
    if (m >= bound || m <= -bound) return;
    E2Point check = to_affine(jac_mul_i64(*c_, m, c_->g));
    if (check == ms[idx]) out[idx] = m;
  };

  int nthreads = omp_get_max_threads();
  std::size_t per = (n + nthreads - 1) / std::max(nthreads, 1);
#pragma omp parallel for schedule(static)
  for (int th = 0; th < nthreads; ++th) {
    std::size_t lo = th * per, hi = std::min(n, lo + per);
    if (lo >= hi) continue;
    // walker: index, forward point (M - iS G), backward point (M + iS G)
    std::vector<std::size_t> idx;
    std::vector<E2Point> fwd, bwd;
    for (std::size_t k = lo; k < hi; ++k) {
      const E2Point& m = ms[k];
      if (m.inf) {
        out[k] = 0;
        continue;
      }
      std::int64_t t;
      if (lookup(m, t)) {
        confirm(k, t);
        if (out[k]) continue;
      }
      idx.push_back(k);
      fwd.push_back(m);
      bwd.push_back(m);
    }
    std::vector<FeQ1> den;
    for (std::uint64_t i = 1; i <= steps && !idx.empty(); ++i) {
      std::size_t w = idx.size();
      den.resize(2 * w);
      for (std::size_t k = 0; k < w; ++k) {
        den[2 * k] = fwd[k].inf ? FeQ1::zero() : neg_step.x - fwd[k].x;
        den[2 * k + 1] = bwd[k].inf ? FeQ1::zero() : step_.x - bwd[k].x;
      }
      batch_invert<FeQ1>(den);
      auto advance = [&](E2Point& p, const E2Point& q, const FeQ1& inv) {
        if (p.inf) {
          p = q;
        } else if (inv.is_zero()) {
          p = pt_add(*c_, p, q);  // equal x: doubling or cancellation
        } else {
          FeQ1 lambda = (q.y - p.y) * inv;
          FeQ1 x3 = lambda.sqr() - p.x - q.x;
          p = E2Point::of(x3, lambda * (p.x - x3) - p.y);
        }
      };
      std::size_t keep = 0;
      const std::int64_t base = static_cast<std::int64_t>(i * stride_);
      for (std::size_t k = 0; k < w; ++k) {
        advance(fwd[k], neg_step, den[2 * k]);
        advance(bwd[k], step_, den[2 * k + 1]);
        std::size_t id = idx[k];
        std::int64_t t;
        if (fwd[k].inf) {
          confirm(id, base);
        } else if (lookup(fwd[k], t)) {
          confirm(id, base + t);
        }
        if (!out[id]) {
          if (bwd[k].inf) {
            confirm(id, -base);
          } else if (lookup(bwd[k], t)) {
            confirm(id, t - base);
          }
        }
        if (!out[id]) {
          idx[keep] = id;
          fwd[keep] = fwd[k];
          bwd[keep] = bwd[k];
          ++keep;
        }
      }
      idx.resize(keep);
      fwd.resize(keep);
      bwd.resize(keep);
    }
  }
  return out;
}

std::optional<std::int64_t> BsgsTable::dlog(const E2Point& m, int bound_bits) const {
  E2Point one[1] = {m};
  return dlog_batch(one, bound_bits)[0];
}

// ---------------------------------------------------------------------------
// Encryption context

Ahe::Ahe(const E2Params& c) : c_(&c), g_table_(c, c.g) {}

KeyPair Ahe::keygen(Rng& rng) const {
  KeyPair kp;
  kp.sk = rng.scalar_below(c_->order);
  kp.pk = to_affine(g_table_.mul(kp.sk));
  return kp;
}

void Ahe::set_public_key(const E2Point& pk) {
  if (pk.inf || !on_curve(*c_, pk)) throw AheError(AheError::Code::bad_encoding, "public key not on E2");
  pk_ = pk;
  pk_table_ = FixedBaseTable<FeQ1>(*c_, pk);
}

E2Point Ahe::encode_plain(std::int64_t m) const { return to_affine(g_table_.mul_i64(m)); }

Ciphertext Ahe::enc_with(std::int64_t m, const U256& r) const {
  if (pk_table_.empty()) throw std::logic_error("no public key set");
  JacPoint<FeQ1> c1 = g_table_.mul(r);
  JacPoint<FeQ1> c2 = jac_add(*c_, g_table_.mul_i64(m), pk_table_.mul(r));
  std::array<JacPoint<FeQ1>, 2> js = {c1, c2};
  auto a = batch_to_affine<FeQ1>(js);
  return {a[0], a[1]};
}

static void check_bound(std::int64_t m, int bound_bits) {
  std::int64_t bound = std::int64_t{1} << bound_bits;
  if (m >= bound || m <= -bound) {
    throw AheError(AheError::Code::plaintext_out_of_range, "plaintext " + std::to_string(m) + " exceeds bound");
  }
}

Ciphertext Ahe::enc(std::int64_t m, Rng& rng, int bound_bits) const {
  check_bound(m, bound_bits);
  return enc_with(m, rng.scalar_below(c_->order));
}

std::vector<Ciphertext> Ahe::enc_many(std::span<const std::int64_t> ms, Rng& rng, int bound_bits) const {
  if (pk_table_.empty()) throw std::logic_error("no public key set");
  for (auto m : ms) check_bound(m, bound_bits);
  std::vector<U256> rs(ms.size());
  for (auto& r : rs) r = rng.scalar_below(c_->order);
  std::vector<Ciphertext> out(ms.size());
  std::size_t chunks = (ms.size() + 255) / 256;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t ch = 0; ch < chunks; ++ch) {
    std::size_t lo = ch * 256, hi = std::min(ms.size(), lo + 256);
    std::vector<JacPoint<FeQ1>> js;
    js.reserve(2 * (hi - lo));
    for (std::size_t i = lo; i < hi; ++i) {
      js.push_back(g_table_.mul(rs[i]));
      js.push_back(jac_add(*c_, g_table_.mul_i64(ms[i]), pk_table_.mul(rs[i])));
    }
    auto a = batch_to_affine<FeQ1>(js);
    for (std::size_t i = lo; i < hi; ++i) out[i] = {a[2 * (i - lo)], a[2 * (i - lo) + 1]};
  }
  return out;
}

Ciphertext Ahe::add(const Ciphertext& a, const Ciphertext& b) const {
  return {pt_add(*c_, a.c1, b.c1), pt_add(*c_, a.c2, b.c2)};
}
Ciphertext Ahe::sub(const Ciphertext& a, const Ciphertext& b) const {
  return {pt_sub(*c_, a.c1, b.c1), pt_sub(*c_, a.c2, b.c2)};
}
Ciphertext Ahe::neg(const Ciphertext& a) const { return {pt_neg(a.c1), pt_neg(a.c2)}; }

Ciphertext Ahe::scal_mul(std::int64_t s, const Ciphertext& a) const {
  std::array<JacPoint<FeQ1>, 2> js = {jac_mul_i64(*c_, s, a.c1), jac_mul_i64(*c_, s, a.c2)};
  auto r = batch_to_affine<FeQ1>(js);
  return {r[0], r[1]};
}

Ciphertext Ahe::scal_mul(const U256& s, const Ciphertext& a) const {
  return {pt_mul(*c_, s, a.c1), pt_mul(*c_, s, a.c2)};
}

// ---------------------------------------------------------------------------
// Decryption

Decryptor::Decryptor(const U256& sk, std::shared_ptr<const BsgsTable> table, const E2Params& c)
    : c_(&c), sk_(sk), table_(std::move(table)) {}

E2Point Decryptor::unmask(const Ciphertext& ct) const {
  return to_affine(jac_add_mixed(*c_, jac_neg(jac_mul(*c_, sk_, ct.c1)), ct.c2));
}

std::int64_t Decryptor::dec(const Ciphertext& ct, int bound_bits) const {
  auto m = table_->dlog(unmask(ct), bound_bits);
  if (!m) throw AheError(AheError::Code::dlog_not_found, "plaintext outside the decryptable range");
  return *m;
}

std::vector<std::int64_t> Decryptor::dec_many(std::span<const Ciphertext> cts, int bound_bits) const {
  std::vector<E2Point> ms(cts.size());
  std::size_t chunks = (cts.size() + 127) / 128;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t ch = 0; ch < chunks; ++ch) {
    std::size_t lo = ch * 128, hi = std::min(cts.size(), lo + 128);
    std::vector<JacPoint<FeQ1>> js;
    js.reserve(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) {
      js.push_back(jac_add_mixed(*c_, jac_neg(jac_mul(*c_, sk_, cts[i].c1)), cts[i].c2));
    }
    auto a = batch_to_affine<FeQ1>(js);
    std::copy(a.begin(), a.end(), ms.begin() + static_cast<std::ptrdiff_t>(lo));
  }
  auto found = table_->dlog_batch(ms, bound_bits);
  std::vector<std::int64_t> out(cts.size());
  for (std::size_t i = 0; i < cts.size(); ++i) {
    if (!found[i]) {
      throw AheError(AheError::Code::dlog_not_found, "ciphertext " + std::to_string(i) + " outside the decryptable range");
    }
    out[i] = *found[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Encodings

CiphertextBytes encode_ciphertext(const Ciphertext& c) {
  CiphertextBytes out;
  auto a = encode_point(c.c1), b = encode_point(c.c2);
  std::copy(a.begin(), a.end(), out.begin());
  std::copy(b.begin(), b.end(), out.begin() + 33);
  return out;
}

Ciphertext decode_ciphertext(const E2Params& c, std::span<const std::uint8_t, 66> in) {
  Ciphertext ct;
  auto e1 = decode_point(c, in.subspan<0, 33>(), ct.c1);
  auto e2 = decode_point(c, in.subspan<33, 33>(), ct.c2);
  if (e1 != DecodeError::none || e2 != DecodeError::none) {
    throw AheError(AheError::Code::bad_encoding,
                   std::string("ciphertext: ") + to_string(e1 != DecodeError::none ? e1 : e2));
  }
  return ct;
}

std::array<std::uint8_t, 32> encode_secret_key(const U256& sk) {
  std::array<std::uint8_t, 32> out;
  u256_to_be(sk, out);
  return out;
}

U256 decode_secret_key(std::span<const std::uint8_t, 32> in) {
  U256 sk = u256_from_be(in);
  if (is_zero(sk) || cmp(sk, TagQ2::modulus) >= 0) throw AheError(AheError::Code::bad_encoding, "secret key out of range");
  return sk;
}

std::int64_t fp_encode(double x, int f, int bound_bits) {
  if (f < 0 || f > 60) throw std::invalid_argument("fractional bits out of range");
  double scaled = std::ldexp(x, f);
  double r = std::nearbyint(scaled);  // default rounding mode: ties to even
  if (!std::isfinite(r) || std::fabs(r) >= std::ldexp(1.0, bound_bits)) {
    throw AheError(AheError::Code::overflow, "fixed-point overflow");
  }
  return static_cast<std::int64_t>(r);
}

double fp_decode(std::int64_t v, int f) { return std::ldexp(static_cast<double>(v), -f); }

}  // namespace vpin
