#include "vpin/cpsnark.hpp"

#include <omp.h>

#include <cstring>

namespace vpin::cps {

namespace {

constexpr std::uint32_t kBlindingIndex = 0xffffffffu;
constexpr std::uint8_t kMagic[4] = {'V', 'P', 'I', 'N'};

void put_fq(Bytes& out, const Fq& v) {
  std::uint8_t b[32];
  v.to_be(std::span<std::uint8_t, 32>(b, 32));
  out.insert(out.end(), b, b + 32);
}

void put_u256(Bytes& out, const U256& v) {
  std::uint8_t b[32];
  u256_to_be(v, std::span<std::uint8_t, 32>(b, 32));
  out.insert(out.end(), b, b + 32);
}

[[noreturn]] void malformed(const std::string& why) { throw CpsError(CpsError::Code::malformed_proof, why); }

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = get_u32be(b_.data() + pos_);
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t, 32> chunk32() {
    need(32);
    auto s = std::span<const std::uint8_t, 32>(b_.data() + pos_, 32);
    pos_ += 32;
    return s;
  }
  Fq fq() {
    Fq v;
    if (!Fq::from_be(chunk32(), v)) malformed("field element out of range");
    return v;
  }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) malformed("truncated payload");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

struct Payload {
  std::vector<Opening> openings;
  std::vector<Fq> public_inputs;
};

Bytes encode_payload(std::span<const Opening> openings, std::span<const Fq> pub) {
  Bytes out;
  put_u32be(out, static_cast<std::uint32_t>(openings.size()));
  for (const auto& o : openings) {
    put_u32be(out, static_cast<std::uint32_t>(o.values.size()));
    put_u256(out, o.blinding);
    for (const auto& v : o.values) put_fq(out, v);
  }
  put_u32be(out, static_cast<std::uint32_t>(pub.size()));
  for (const auto& v : pub) put_fq(out, v);
  return out;
}

Payload decode_payload(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  Payload p;
  std::uint32_t n = r.u32();
  if (n > 64) malformed("too many committed vectors");
  for (std::uint32_t i = 0; i < n; ++i) {
    std::uint32_t len = r.u32();
    if (static_cast<std::size_t>(len) * 32 + 32 > r.remaining()) malformed("truncated opening");
    Opening o;
    o.blinding = u256_from_be(r.chunk32());
    if (cmp(o.blinding, Fq::P) >= 0) malformed("blinding out of range");
    o.values.reserve(len);
    for (std::uint32_t j = 0; j < len; ++j) o.values.push_back(r.fq());
    p.openings.push_back(std::move(o));
  }
  std::uint32_t npub = r.u32();
  if (static_cast<std::size_t>(npub) * 32 != r.remaining()) malformed("public input length mismatch");
  p.public_inputs.reserve(npub);
  for (std::uint32_t j = 0; j < npub; ++j) p.public_inputs.push_back(r.fq());
  return p;
}

}  // namespace

E1Point hash_to_curve(std::string_view domain, std::uint32_t index) {
  const E1Params& c = e1_default();
  for (std::uint32_t ctr = 0;; ++ctr) {
    Bytes msg(domain.begin(), domain.end());
    put_u32be(msg, index);
    put_u32be(msg, ctr);
    Digest d = sha256(msg);
    FeP1 x = FeP1::from_u256_reduce(u256_from_be(d));
    FeP1 rhs = (x.sqr() + c.a) * x + c.b;
    FeP1 y;
    if (!rhs.sqrt(y)) continue;
    if (y.is_odd()) y = -y;
    E1Point p = to_affine(jac_mul(c, c.cofactor, E1Point::of(x, y)));
    if (!p.inf) return p;
  }
}

PublicParams setup(unsigned security_bits, std::size_t max_len, std::string_view domain) {
  (void)security_bits;  // fixed by the curve choice; kept for interface symmetry
  PublicParams pp;
  pp.domain = std::string(domain);
  pp.g.resize(max_len);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(max_len);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) pp.g[i] = hash_to_curve(domain, static_cast<std::uint32_t>(i));
  pp.h = hash_to_curve(domain, kBlindingIndex);
  return pp;
}

namespace {

std::vector<U256> scalars_of(std::span<const Fq> values) {
  std::vector<U256> s(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) s[i] = values[i].to_u256();
  return s;
}

void check_len(std::span<const Fq> values, const PublicParams& pp) {
  if (values.size() > pp.max_len()) {
    throw CpsError(CpsError::Code::length_exceeded,
                   "vector of length " + std::to_string(values.size()) + " exceeds " + std::to_string(pp.max_len()));
  }
}

}  // namespace

Commitment commit_serial(std::span<const Fq> values, const U256& r, const PublicParams& pp) {
  check_len(values, pp);
  const E1Params& c = e1_default();
  auto s = scalars_of(values);
  auto acc = msm<FeP1>(c, std::span<const E1Point>(pp.g.data(), values.size()), s);
  acc = jac_add(c, acc, jac_mul(c, r, pp.h));
  return Commitment{to_affine(acc)};
}

Commitment commit(std::span<const Fq> values, const U256& r, const PublicParams& pp) {
  check_len(values, pp);
  const E1Params& c = e1_default();
  auto s = scalars_of(values);
  auto acc = msm_parallel<FeP1>(c, std::span<const E1Point>(pp.g.data(), values.size()), s);
  acc = jac_add(c, acc, jac_mul(c, r, pp.h));
  return Commitment{to_affine(acc)};
}

PointBytes encode_commitment(const Commitment& c) { return encode_point(c.point); }

Commitment decode_commitment(std::span<const std::uint8_t, 33> in) {
  Commitment c;
  auto err = decode_point(e1_default(), in, c.point, true);
  if (err != DecodeError::none) malformed(std::string("bad commitment encoding: ") + to_string(err));
  return c;
}

Synthesis synthesize_all(const Circuit& circuit, std::span<const Opening> committed) {
  const std::size_t n = circuit.num_parts();
  std::vector<std::vector<Fq>> pubs(n);
  std::vector<r1cs::GadgetStats> stats(n);
  std::vector<std::string> errs(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      r1cs::ConstraintSystem cs(r1cs::ConstraintSystem::Mode::stream);
      circuit.synthesize(cs, static_cast<std::size_t>(i), committed);
      if (auto bad = cs.first_violation()) {
        errs[i] = "part " + std::to_string(i) + ": row " + std::to_string(*bad) + " violated";
      }
      pubs[i] = cs.public_values();
      stats[i] = cs.stats();
    } catch (const std::exception& e) {
      errs[i] = "part " + std::to_string(i) + ": " + e.what();
    }
  }
  Synthesis out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!errs[i].empty() && out.satisfied) {
      out.satisfied = false;
      out.failure = errs[i];
    }
    out.public_values.insert(out.public_values.end(), pubs[i].begin(), pubs[i].end());
    out.stats.n_constraints += stats[i].n_constraints;
    out.stats.n_vars += stats[i].n_vars;
    out.stats.n_point_mults += stats[i].n_point_mults;
    out.stats.n_point_adds += stats[i].n_point_adds;
  }
  return out;
}

ProofBundle prove(const Circuit& circuit, std::span<const Opening> committed, const PublicParams& pp,
                  CircuitReport* report) {
  for (const auto& o : committed) check_len(o.values, pp);
  Synthesis s = synthesize_all(circuit, committed);
  if (!s.satisfied) throw CpsError(CpsError::Code::unsatisfied_circuit, "unsatisfied circuit: " + s.failure);
  if (report) {
    report->stats = s.stats;
    report->num_public = s.public_values.size();
  }
  return assemble_reference(committed, std::move(s.public_values));
}

ProofBundle assemble_reference(std::span<const Opening> committed, std::vector<Fq> public_inputs) {
  ProofBundle b;
  b.backend_id = kBackendReference;
  b.payload = encode_payload(committed, public_inputs);
  b.public_inputs = std::move(public_inputs);
  return b;
}

std::vector<Opening> reference_openings(const ProofBundle& proof) {
  if (proof.backend_id != kBackendReference) throw CpsError(CpsError::Code::unknown_backend, "unknown backend");
  return decode_payload(proof.payload).openings;
}

VerifyResult verify(const ProofBundle& proof, std::span<const Commitment> cms, std::span<const Fq> public_inputs,
                    const Circuit& circuit, const PublicParams& pp) {
  auto reject = [](std::string why) { return VerifyResult{false, std::move(why)}; };
  if (proof.backend_id != pp.backend_id || proof.backend_id != kBackendReference) return reject("backend mismatch");
  if (proof.public_inputs.size() != public_inputs.size() ||
      !std::equal(public_inputs.begin(), public_inputs.end(), proof.public_inputs.begin())) {
    return reject("public inputs differ from the verifier's");
  }
  Payload p;
  try {
    p = decode_payload(proof.payload);
  } catch (const CpsError& e) {
    return reject(e.what());
  }
  if (p.public_inputs != proof.public_inputs) return reject("payload public inputs disagree");
  if (p.openings.size() != cms.size()) return reject("opening count differs from commitment count");
  for (std::size_t i = 0; i < cms.size(); ++i) {
    if (p.openings[i].values.size() > pp.max_len()) return reject("opening longer than parameters allow");
    if (!(commit(p.openings[i].values, p.openings[i].blinding, pp) == cms[i])) {
      return reject("opening " + std::to_string(i) + " does not match its commitment");
    }
  }
  Synthesis s = synthesize_all(circuit, p.openings);
  if (!s.satisfied) return reject(s.failure);
  if (s.public_values.size() != public_inputs.size() ||
      !std::equal(public_inputs.begin(), public_inputs.end(), s.public_values.begin())) {
    return reject("circuit public values differ");
  }
  return VerifyResult{true, {}};
}

Bytes serialize(const ProofBundle& proof) {
  Bytes out(kMagic, kMagic + 4);
  out.push_back(proof.backend_id);
  put_u32be(out, static_cast<std::uint32_t>(proof.payload.size()));
  out.insert(out.end(), proof.payload.begin(), proof.payload.end());
  return out;
}

ProofBundle deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 9 || std::memcmp(bytes.data(), kMagic, 4) != 0) malformed("bad magic");
  ProofBundle b;
  b.backend_id = bytes[4];
  if (b.backend_id != kBackendReference) throw CpsError(CpsError::Code::unknown_backend, "unknown backend");
  std::uint32_t len = get_u32be(bytes.data() + 5);
  if (static_cast<std::size_t>(len) != bytes.size() - 9) malformed("payload length mismatch");
  b.payload.assign(bytes.begin() + 9, bytes.end());
  b.public_inputs = decode_payload(b.payload).public_inputs;
  return b;
}

}  // namespace vpin::cps
