#include "vpin/protocol.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <condition_variable>
#include <cstring>
#include <deque>
#include <map>
#include <mutex>
#include <thread>

#include "json.hpp"

namespace vpin::proto {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

[[noreturn]] void fail(ProtocolError::Code c, const std::string& what) { throw ProtocolError(c, what); }
[[noreturn]] void malformed(const std::string& what) { fail(ProtocolError::Code::malformed, what); }

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = get_u32be(b_.data() + pos_);
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return b_.size() - pos_; }
  void done() const {
    if (pos_ != b_.size()) malformed("trailing bytes in payload");
  }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) malformed("payload too short");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

void put_ct(Bytes& out, const Ciphertext& c) {
  auto e = encode_ciphertext(c);
  out.insert(out.end(), e.begin(), e.end());
}

Ciphertext get_ct(Reader& r) {
  auto s = r.take(66);
  try {
    return decode_ciphertext(e2_default(), std::span<const std::uint8_t, 66>(s.data(), 66));
  } catch (const AheError& e) {
    malformed(e.what());
  }
}

void put_tensor(Bytes& out, const CTensor& t) {
  put_u32be(out, static_cast<std::uint32_t>(t.c));
  put_u32be(out, static_cast<std::uint32_t>(t.h));
  put_u32be(out, static_cast<std::uint32_t>(t.w));
  for (const auto& c : t.data) put_ct(out, c);
}

CTensor get_tensor(Reader& r) {
  std::uint32_t c = r.u32(), h = r.u32(), w = r.u32();
  std::uint64_t n = std::uint64_t(c) * h * w;
  if (c == 0 || h == 0 || w == 0 || n > (1u << 24) || n * 66 > r.remaining()) malformed("bad tensor header");
  CTensor t{static_cast<int>(c), static_cast<int>(h), static_cast<int>(w)};
  for (auto& x : t.data) x = get_ct(r);
  return t;
}

void put_point33(Bytes& out, const PointBytes& p) { out.insert(out.end(), p.begin(), p.end()); }

cps::Commitment get_commitment(Reader& r) {
  auto s = r.take(33);
  try {
    return cps::decode_commitment(std::span<const std::uint8_t, 33>(s.data(), 33));
  } catch (const cps::CpsError& e) {
    malformed(e.what());
  }
}

void check_shape(const CTensor& t, const std::array<int, 3>& s, const std::string& what) {
  if (t.c != s[0] || t.h != s[1] || t.w != s[2]) fail(ProtocolError::Code::shape_mismatch, what + ": unexpected shape");
}

// Messages the session sends and receives, each appended to the transcript.
class Endpoint {
 public:
  explicit Endpoint(Channel& ch) : ch_(ch) {}
  void send(MsgType t, Bytes payload) {
    Message m{t, std::move(payload)};
    tr.append(m);
    ch_.send(m);
  }
  Message expect(MsgType t) {
    Message m = ch_.recv();
    tr.append(m);
    if (m.type == MsgType::abort) {
      std::string why(m.payload.begin() + std::min<std::size_t>(1, m.payload.size()), m.payload.end());
      fail(ProtocolError::Code::peer_abort, "peer aborted: " + why);
    }
    if (m.type != t) fail(ProtocolError::Code::bad_state, std::string("expected ") + to_string(t) + ", got " + to_string(m.type));
    return m;
  }
  void abort(ProtocolError::Code c, const std::string& why) {
    Bytes p{static_cast<std::uint8_t>(c)};
    p.insert(p.end(), why.begin(), why.end());
    try {
      send(MsgType::abort, std::move(p));
    } catch (...) {
      // peer already gone
    }
  }
  Transcript tr;

 private:
  Channel& ch_;
};

Bytes layer_tensor_payload(std::size_t layer, const CTensor& t) {
  Bytes p;
  put_u32be(p, static_cast<std::uint32_t>(layer));
  put_tensor(p, t);
  return p;
}

CTensor read_layer_tensor(const Message& m, std::size_t layer) {
  Reader r(m.payload);
  if (r.u32() != layer) fail(ProtocolError::Code::bad_state, "layer index out of order");
  CTensor t = get_tensor(r);
  r.done();
  return t;
}

struct ResultMsg {
  CTensor logits;
  cps::Commitment aux_cm;
  std::vector<std::vector<Ciphertext>> bias;
};

Bytes result_payload(std::size_t last, const CTensor& logits, const cps::Commitment& aux,
                     const std::vector<std::vector<Ciphertext>>& bias) {
  Bytes p = layer_tensor_payload(last, logits);
  put_point33(p, cps::encode_commitment(aux));
  put_u32be(p, static_cast<std::uint32_t>(bias.size()));
  for (const auto& v : bias) {
    put_u32be(p, static_cast<std::uint32_t>(v.size()));
    for (const auto& c : v) put_ct(p, c);
  }
  return p;
}

ResultMsg read_result(const Message& m, std::size_t last) {
  Reader r(m.payload);
  ResultMsg out;
  if (r.u32() != last) fail(ProtocolError::Code::bad_state, "result for the wrong layer");
  out.logits = get_tensor(r);
  out.aux_cm = get_commitment(r);
  std::uint32_t n = r.u32();
  if (n != last + 1) malformed("bias list length");
  out.bias.resize(n);
  for (auto& v : out.bias) {
    std::uint32_t k = r.u32();
    if (std::uint64_t(k) * 66 > r.remaining()) malformed("bias list too long");
    for (std::uint32_t i = 0; i < k; ++i) v.push_back(get_ct(r));
  }
  r.done();
  return out;
}

// Bias ciphertext counts the architecture implies.
std::size_t expected_bias_count(const Layer& l) {
  if (l.type == LayerType::conv) return l.conv.bias.size();
  if (l.type == LayerType::fc) return std::size_t(l.fc.h);
  return 0;
}

std::size_t aux_len(const Model& m) {
  std::size_t n = 0;
  for (const auto& l : m.layers) n += expected_bias_count(l);
  return 6 * n;
}

std::size_t max_len_for(const Model& m) { return std::max(model_layout(m).total, aux_len(m)); }

json params_json(const Model& m) {
  return json{{"version", kVersion},
              {"e1", json::parse(params_to_json(e1_default()))},
              {"e2", json::parse(params_to_json(e2_default()))},
              {"domain", std::string(cps::kDomain)},
              {"max_len", max_len_for(m)},
              {"arch", json::parse(arch_to_json(m))}};
}

struct Params {
  Model arch;
  std::string domain;
  std::size_t max_len = 0;
};

bool same_curve(const E2Params& a, const E2Params& b) {
  return a.a == b.a && a.b == b.b && a.base_modulus == b.base_modulus && a.order == b.order && a.g == b.g;
}
bool same_curve(const E1Params& a, const E1Params& b) {
  return a.a == b.a && a.b == b.b && a.base_modulus == b.base_modulus && a.order == b.order && a.g == b.g;
}

Params read_params(const Message& m) {
  Params p;
  try {
    json j = json::parse(std::string(m.payload.begin(), m.payload.end()));
    if (j.at("version").get<int>() != kVersion) fail(ProtocolError::Code::invalid_params, "unsupported version");
    E1Params e1 = e1_params_from_json(j.at("e1").dump());
    E2Params e2 = e2_params_from_json(j.at("e2").dump());
    auto r1 = validate_params(e1), r2 = validate_params(e2);
    if (!r1.ok() || !r2.ok() || !check_embedding(e1, e2)) fail(ProtocolError::Code::invalid_params, "curve parameters fail validation");
    if (!same_curve(e1, e1_default()) || !same_curve(e2, e2_default())) {
      fail(ProtocolError::Code::invalid_params, "curve parameters differ from the supported pair");
    }
    p.domain = j.at("domain").get<std::string>();
    p.max_len = j.at("max_len").get<std::size_t>();
    p.arch = arch_from_json(j.at("arch").dump());
  } catch (const ProtocolError&) {
    throw;
  } catch (const std::exception& e) {
    fail(ProtocolError::Code::invalid_params, std::string("params: ") + e.what());
  }
  if (p.max_len < max_len_for(p.arch) || p.max_len > (1u << 22)) fail(ProtocolError::Code::invalid_params, "max_len out of range");
  return p;
}

std::vector<cps::Fq> fq_vector(std::span<const std::int64_t> v) {
  std::vector<cps::Fq> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = cps::fq_of(v[i]);
  return out;
}

void tamper(CTensor& t, Rng& rng, const Ahe& ahe) {
  std::size_t cell = rng.uniform(t.size());
  std::int64_t delta = 1 + static_cast<std::int64_t>(rng.uniform(255));
  t.data[cell] = ahe.add(t.data[cell], ahe.enc(rng.uniform(2) ? delta : -delta, rng));
}

// What a lazy server might return instead of the window average: the top-left input of each
// window scaled by k^2 k', right shape and roughly right magnitude.
CTensor fake_pool(const E2Params& c, int k, std::int64_t kp, const CTensor& in) {
  CTensor sub(in.c, in.h / k, in.w / k);
  for (int ch = 0; ch < sub.c; ++ch) {
    for (int i = 0; i < sub.h; ++i) {
      for (int j = 0; j < sub.w; ++j) sub.at(ch, i, j) = in.at(ch, i * k, j * k);
    }
  }
  return pool_scale_enc(c, sub, kp * k * k);
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// Framing and transports

const char* to_string(MsgType t) {
  switch (t) {
    case MsgType::hello: return "HELLO";
    case MsgType::params: return "PARAMS";
    case MsgType::pubkey: return "PUBKEY";
    case MsgType::commit: return "COMMIT";
    case MsgType::sample: return "SAMPLE";
    case MsgType::act_request: return "ACT_REQUEST";
    case MsgType::act_response: return "ACT_RESPONSE";
    case MsgType::challenge: return "CHALLENGE";
    case MsgType::result: return "RESULT";
    case MsgType::proof: return "PROOF";
    case MsgType::abort: return "ABORT";
  }
  return "?";
}

const char* to_string(ProtocolError::Code c) {
  switch (c) {
    case ProtocolError::Code::io: return "io";
    case ProtocolError::Code::malformed: return "malformed";
    case ProtocolError::Code::bad_state: return "bad-state";
    case ProtocolError::Code::invalid_params: return "invalid-params";
    case ProtocolError::Code::overflow: return "overflow";
    case ProtocolError::Code::shape_mismatch: return "shape-mismatch";
    case ProtocolError::Code::proving_failed: return "proving-failed";
    case ProtocolError::Code::peer_abort: return "peer-abort";
    case ProtocolError::Code::internal: return "internal";
  }
  return "?";
}

Bytes frame(const Message& m) {
  if (m.payload.size() + 1 > kMaxFrame) fail(ProtocolError::Code::malformed, "frame too large");
  Bytes out;
  out.reserve(m.payload.size() + 5);
  put_u32be(out, static_cast<std::uint32_t>(m.payload.size() + 1));
  out.push_back(static_cast<std::uint8_t>(m.type));
  out.insert(out.end(), m.payload.begin(), m.payload.end());
  return out;
}

namespace {
Message parse_one(std::span<const std::uint8_t> b, std::size_t& pos) {
  if (b.size() - pos < 5) malformed("truncated frame header");
  std::uint32_t len = get_u32be(b.data() + pos);
  if (len == 0 || len > kMaxFrame) malformed("bad frame length");
  if (b.size() - pos - 4 < len) malformed("truncated frame");
  std::uint8_t t = b[pos + 4];
  if (t < 1 || t > static_cast<std::uint8_t>(MsgType::abort)) malformed("unknown message type");
  Message m{static_cast<MsgType>(t), Bytes(b.begin() + pos + 5, b.begin() + pos + 4 + len)};
  pos += 4 + len;
  return m;
}
}  // namespace

Message unframe(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  Message m = parse_one(bytes, pos);
  if (pos != bytes.size()) malformed("trailing bytes after frame");
  return m;
}

std::vector<Message> unframe_all(std::span<const std::uint8_t> bytes) {
  std::vector<Message> out;
  std::size_t pos = 0;
  while (pos < bytes.size()) out.push_back(parse_one(bytes, pos));
  return out;
}

namespace {

struct PipeState {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Message> q[2];
  bool closed[2] = {false, false};
};

class MemoryChannel : public Channel {
 public:
  MemoryChannel(std::shared_ptr<PipeState> s, int side) : s_(std::move(s)), side_(side) {}
  ~MemoryChannel() override {
    std::lock_guard lk(s_->mu);
    s_->closed[side_] = true;
    s_->cv.notify_all();
  }
  void send(const Message& m) override {
    std::lock_guard lk(s_->mu);
    if (s_->closed[1 - side_]) fail(ProtocolError::Code::io, "peer closed");
    s_->q[1 - side_].push_back(m);
    s_->cv.notify_all();
  }
  Message recv() override {
    std::unique_lock lk(s_->mu);
    s_->cv.wait(lk, [&] { return !s_->q[side_].empty() || s_->closed[1 - side_]; });
    if (s_->q[side_].empty()) fail(ProtocolError::Code::io, "peer closed");
    Message m = std::move(s_->q[side_].front());
    s_->q[side_].pop_front();
    return m;
  }

 private:
  std::shared_ptr<PipeState> s_;
  int side_;
};

class TcpChannel : public Channel {
 public:
  explicit TcpChannel(int fd) : fd_(fd) {
    int one = 1;
    setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~TcpChannel() override { ::close(fd_); }
  void send(const Message& m) override {
    Bytes f = frame(m);
    std::size_t off = 0;
    while (off < f.size()) {
      ssize_t n = ::send(fd_, f.data() + off, f.size() - off, MSG_NOSIGNAL);
      if (n <= 0) fail(ProtocolError::Code::io, std::string("send: ") + std::strerror(errno));
      off += std::size_t(n);
    }
  }
  Message recv() override {
    std::uint8_t hdr[5];
    read_full(hdr, 5);
    std::uint32_t len = get_u32be(hdr);
    if (len == 0 || len > kMaxFrame) fail(ProtocolError::Code::malformed, "bad frame length");
    std::uint8_t t = hdr[4];
    if (t < 1 || t > static_cast<std::uint8_t>(MsgType::abort)) fail(ProtocolError::Code::malformed, "unknown message type");
    Message m{static_cast<MsgType>(t), Bytes(len - 1)};
    read_full(m.payload.data(), m.payload.size());
    return m;
  }

 private:
  void read_full(std::uint8_t* p, std::size_t n) {
    while (n > 0) {
      ssize_t r = ::recv(fd_, p, n, 0);
      if (r <= 0) fail(ProtocolError::Code::io, r == 0 ? "connection closed" : std::string("recv: ") + std::strerror(errno));
      p += r;
      n -= std::size_t(r);
    }
  }
  int fd_;
};

}  // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> memory_pipe() {
  auto s = std::make_shared<PipeState>();
  return {std::make_unique<MemoryChannel>(s, 0), std::make_unique<MemoryChannel>(s, 1)};
}

TcpListener::TcpListener(std::uint16_t port, const std::string& host) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) fail(ProtocolError::Code::io, "socket failed");
  int one = 1;
  setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in a{};
  a.sin_family = AF_INET;
  a.sin_port = htons(port);
  if (inet_pton(AF_INET, host.c_str(), &a.sin_addr) != 1) {
    ::close(fd_);
    fail(ProtocolError::Code::io, "bad listen address " + host);
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&a), sizeof a) < 0 || ::listen(fd_, 16) < 0) {
    std::string e = std::strerror(errno);
    ::close(fd_);
    fail(ProtocolError::Code::io, "bind/listen: " + e);
  }
  socklen_t len = sizeof a;
  getsockname(fd_, reinterpret_cast<sockaddr*>(&a), &len);
  port_ = ntohs(a.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Channel> TcpListener::accept() {
  int c = ::accept(fd_, nullptr, nullptr);
  if (c < 0) fail(ProtocolError::Code::io, std::string("accept: ") + std::strerror(errno));
  return std::make_unique<TcpChannel>(c);
}

std::unique_ptr<Channel> tcp_connect(const std::string& host, std::uint16_t port) {
  addrinfo hints{}, *res = nullptr;
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  int rc = getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res);
  if (rc != 0) fail(ProtocolError::Code::io, std::string("resolve: ") + gai_strerror(rc));
  int fd = -1;
  for (addrinfo* p = res; p; p = p->ai_next) {
    fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  freeaddrinfo(res);
  if (fd < 0) fail(ProtocolError::Code::io, "cannot connect to " + host + ":" + std::to_string(port));
  return std::make_unique<TcpChannel>(fd);
}

void Transcript::append(const Message& m) {
  Bytes f = frame(m);
  h_.update(f);
  log_.push_back(m);
}

Bytes Transcript::bytes() const {
  Bytes out;
  for (const auto& m : log_) {
    Bytes f = frame(m);
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Session state

const char* to_string(Phase p) {
  switch (p) {
    case Phase::init: return "Init";
    case Phase::keyed: return "Keyed";
    case Phase::committed: return "Committed";
    case Phase::sample_sent: return "SampleSent";
    case Phase::layer_done: return "LayerDone";
    case Phase::act_done: return "ActDone";
    case Phase::challenges_fixed: return "ChallengesFixed";
    case Phase::proved: return "Proved";
    case Phase::verified: return "Verified";
    case Phase::aborted: return "Aborted";
  }
  return "?";
}

void SessionState::advance(Phase next) {
  bool ok = false;
  std::size_t layer = layer_;
  switch (next) {
    case Phase::keyed: ok = phase_ == Phase::init; break;
    case Phase::committed: ok = phase_ == Phase::keyed; break;
    case Phase::sample_sent: ok = phase_ == Phase::committed; break;
    case Phase::layer_done:
      if (phase_ == Phase::sample_sent) {
        ok = n_layers_ > 0;
        layer = 0;
      } else if (phase_ == Phase::act_done) {
        ok = layer_ + 1 < n_layers_;
        layer = layer_ + 1;
      }
      break;
    case Phase::act_done: ok = phase_ == Phase::layer_done && layer_ + 1 < n_layers_; break;
    case Phase::challenges_fixed: ok = phase_ == Phase::layer_done && layer_ + 1 == n_layers_; break;
    case Phase::proved: ok = phase_ == Phase::challenges_fixed; break;
    case Phase::verified: ok = phase_ == Phase::proved; break;
    case Phase::aborted: ok = true; break;
    case Phase::init: ok = false; break;
  }
  if (!ok) fail(ProtocolError::Code::bad_state, std::string("transition ") + to_string(phase_) + " -> " + to_string(next));
  phase_ = next;
  layer_ = layer;
}

// ---------------------------------------------------------------------------------------------
// Architecture, statements, parameters

std::string arch_to_json(const Model& m) {
  json layers = json::array();
  for (const auto& l : m.layers) {
    switch (l.type) {
      case LayerType::conv:
        layers.push_back({{"type", "conv"},
                          {"k", l.conv.k},
                          {"stride", l.conv.stride},
                          {"pad", l.conv.pad},
                          {"in_ch", l.conv.in_ch},
                          {"out_ch", l.conv.out_ch},
                          {"bias", !l.conv.bias.empty()}});
        break;
      case LayerType::avgpool: layers.push_back({{"type", "avgpool"}, {"k", l.pool.k}}); break;
      case LayerType::fc: layers.push_back({{"type", "fc"}, {"g", l.fc.g}, {"h", l.fc.h}}); break;
    }
  }
  json j = {{"f", m.f},
            {"zeta", m.zeta},
            {"input", {m.in_ch, m.in_h, m.in_w}},
            {"name", m.name},
            {"dataset", m.dataset},
            {"layers", layers}};
  return j.dump();
}

Model arch_from_json(const std::string& text) {
  Model m;
  try {
    json j = json::parse(text);
    m.f = j.at("f").get<int>();
    m.zeta = j.at("zeta").get<int>();
    auto in = j.at("input");
    m.in_ch = in.at(0).get<int>();
    m.in_h = in.at(1).get<int>();
    m.in_w = in.at(2).get<int>();
    m.name = j.value("name", "");
    m.dataset = j.value("dataset", "");
    for (const auto& l : j.at("layers")) {
      Layer L;
      std::string t = l.at("type").get<std::string>();
      auto small = [](int v, int hi) {
        if (v < 0 || v > hi) throw ModelError("architecture value out of range");
        return v;
      };
      if (t == "conv") {
        L.type = LayerType::conv;
        L.conv.k = small(l.at("k").get<int>(), 64);
        L.conv.stride = small(l.at("stride").get<int>(), 64);
        L.conv.pad = small(l.at("pad").get<int>(), 64);
        L.conv.in_ch = small(l.at("in_ch").get<int>(), 4096);
        L.conv.out_ch = small(l.at("out_ch").get<int>(), 4096);
        L.conv.w.assign(std::size_t(L.conv.out_ch) * L.conv.in_ch * L.conv.k * L.conv.k, 0);
        if (l.at("bias").get<bool>()) L.conv.bias.assign(L.conv.out_ch, 0);
      } else if (t == "avgpool") {
        L.type = LayerType::avgpool;
        L.pool.k = small(l.at("k").get<int>(), 64);
      } else if (t == "fc") {
        L.type = LayerType::fc;
        L.fc.g = small(l.at("g").get<int>(), 1 << 16);
        L.fc.h = small(l.at("h").get<int>(), 1 << 16);
        L.fc.w.assign(std::size_t(L.fc.g) * L.fc.h, 0);
        L.fc.b.assign(L.fc.h, 0);
      } else {
        throw ModelError("unknown layer type " + t);
      }
      m.layers.push_back(std::move(L));
    }
    if (m.layers.empty() || m.in_h < 1 || m.in_w < 1 || m.in_ch < 1 || m.in_h * m.in_w * m.in_ch > (1 << 20)) {
      throw ModelError("bad architecture header");
    }
    trace_shapes(m);
  } catch (const json::exception& e) {
    throw ModelError(std::string("architecture json: ") + e.what());
  }
  return m;
}

std::vector<cps::Fq> aux_vector(const SessionRecord& rec) {
  std::vector<cps::Fq> out;
  auto push = [&](const E2Point& p) {
    out.push_back(p.inf ? cps::Fq::zero() : p.x);
    out.push_back(p.inf ? cps::Fq::zero() : p.y);
    out.push_back(p.inf ? cps::Fq::one() : cps::Fq::zero());
  };
  for (const auto& v : rec.bias) {
    for (const auto& c : v) {
      push(c.c1);
      push(c.c2);
    }
  }
  return out;
}

std::string challenge_label(const Model& arch, std::size_t layer) {
  int nconv = 0, nfc = 0;
  for (std::size_t i = 0; i <= layer && i < arch.layers.size(); ++i) {
    nconv += arch.layers[i].type == LayerType::conv;
    nfc += arch.layers[i].type == LayerType::fc;
  }
  switch (arch.layers.at(layer).type) {
    case LayerType::conv: return nconv == 1 ? "conv-γ" : "conv" + std::to_string(nconv) + "-γ";
    case LayerType::fc: return "fc" + std::to_string(nfc) + "-γ";
    case LayerType::avgpool: return "pool" + std::to_string(layer);
  }
  return {};
}

std::vector<rlc::Statement> build_statements(const Model& arch, const SessionRecord& rec, const Digest& seed) {
  const std::size_t n = arch.layers.size();
  if (rec.out.size() != n || rec.act.size() + 1 != n || rec.bias.size() != n) {
    fail(ProtocolError::Code::shape_mismatch, "session record does not match the architecture");
  }
  const ModelLayout L = model_layout(arch);
  std::vector<rlc::Statement> sts;
  for (std::size_t i = 0; i < n; ++i) {
    const Layer& l = arch.layers[i];
    const CTensor& in = i == 0 ? rec.x : rec.act[i - 1];
    const std::string label = challenge_label(arch, i);
    try {
      switch (l.type) {
        case LayerType::conv: {
          U256 gamma = rlc::derive_challenge(seed, label).gamma;
          std::vector<U256> delta{u256(1)};
          for (int o = 1; o < l.conv.out_ch; ++o) delta.push_back(rlc::derive_coeff(seed, label + "/δ", std::uint32_t(o)));
          auto st = rlc::aggregate_conv(l.conv, in, rec.out[i], rec.bias[i], gamma, delta);
          st.layer = i;
          st.w_offset = L.conv_w[i];
          sts.emplace_back(std::move(st));
          break;
        }
        case LayerType::avgpool: {
          auto st = rlc::aggregate_pool(l.pool.k, pool_constant(l.pool.k, arch.f), in, rec.out[i]);
          st.layer = i;
          sts.emplace_back(std::move(st));
          break;
        }
        case LayerType::fc: {
          std::vector<U256> rho;
          for (int r = 0; r < l.fc.h; ++r) rho.push_back(rlc::derive_coeff(seed, label, std::uint32_t(r)));
          auto st = rlc::aggregate_fc(l.fc, flatten(in), rec.out[i].data, rec.bias[i], rho);
          st.layer = i;
          st.w_offset = L.fc_w[i];
          sts.emplace_back(std::move(st));
          break;
        }
      }
    } catch (const ModelError& e) {
      fail(ProtocolError::Code::shape_mismatch, "layer " + std::to_string(i) + ": " + e.what());
    }
  }
  return sts;
}

const cps::PublicParams& public_params(const std::string& domain, std::size_t max_len) {
  static std::mutex mu;
  static std::map<std::pair<std::string, std::size_t>, std::unique_ptr<cps::PublicParams>> cache;
  std::lock_guard lk(mu);
  auto& slot = cache[{domain, max_len}];
  if (!slot) slot = std::make_unique<cps::PublicParams>(cps::setup(128, max_len, domain));
  return *slot;
}

const char* to_string(Attack a) {
  switch (a) {
    case Attack::none: return "none";
    case Attack::uncommitted_model: return "uncommitted-model";
    case Attack::tampered_conv: return "tampered-conv";
    case Attack::tampered_fc: return "tampered-fc";
    case Attack::skipped_pool: return "skipped-pool";
    case Attack::bitflip_proof: return "bitflip-proof";
  }
  return "?";
}

std::optional<Attack> attack_from_string(const std::string& s) {
  for (Attack a : {Attack::none, Attack::uncommitted_model, Attack::tampered_conv, Attack::tampered_fc,
                   Attack::skipped_pool, Attack::bitflip_proof}) {
    if (s == to_string(a)) return a;
  }
  return std::nullopt;
}

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::accepted: return "accepted";
    case Outcome::rejected: return "rejected";
    case Outcome::aborted: return "aborted";
  }
  return "?";
}

// ---------------------------------------------------------------------------------------------
// Server

ServerReport serve_session(Channel& ch, const Model& model, const ServerConfig& cfg) {
  ServerReport rep;
  Endpoint ep(ch);
  Rng rng = cfg.seeded ? Rng(cfg.seed ^ 0x5e7e7e7e5e7e7e7eull) : Rng();
  const E2Params& c = e2_default();
  const std::size_t n = model.layers.size();
  SessionState state(n);
  try {
    trace_shapes(model);
    Message hello = ep.expect(MsgType::hello);
    if (hello.payload.size() != 2 || hello.payload[0] != kVersion || hello.payload[1] > 1) malformed("bad HELLO");
    const bool interactive = hello.payload[1] == 1;

    std::string pj = params_json(model).dump();
    ep.send(MsgType::params, Bytes(pj.begin(), pj.end()));
    const auto& pp = public_params(std::string(cps::kDomain), max_len_for(model));

    Message pk = ep.expect(MsgType::pubkey);
    if (pk.payload.size() != 33) malformed("bad PUBKEY");
    E2Point pkp;
    if (decode_point(c, std::span<const std::uint8_t, 33>(pk.payload.data(), 33), pkp) != DecodeError::none || pkp.inf) {
      malformed("bad public key");
    }
    Ahe ahe(c);
    ahe.set_public_key(pkp);
    state.advance(Phase::keyed);

    // what gets committed, and what actually gets evaluated
    const auto mvec = model_vector(model);
    cps::Opening model_open{fq_vector(mvec), rng.scalar_below(e1_default().order)};
    Model used = model;
    cps::Opening used_open = model_open;
    if (cfg.attack == Attack::uncommitted_model) {
      for (auto& l : used.layers) {
        if (l.type != LayerType::conv) continue;
        l.conv.w[rng.uniform(l.conv.w.size())] += 1 + std::int32_t(rng.uniform(3));
        break;
      }
      used_open.values = fq_vector(model_vector(used));
    }
    cps::Commitment cm = cps::commit(model_open.values, model_open.blinding, pp);
    Bytes cmb;
    put_point33(cmb, cps::encode_commitment(cm));
    ep.send(MsgType::commit, std::move(cmb));
    state.advance(Phase::committed);

    const auto shapes = trace_shapes(model).shapes;
    SessionRecord rec;
    {
      Message s = ep.expect(MsgType::sample);
      Reader r(s.payload);
      rec.x = get_tensor(r);
      r.done();
      check_shape(rec.x, shapes[0], "sample");
    }
    state.advance(Phase::sample_sent);

    bool tampered_conv = false;
    std::size_t last_fc = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (model.layers[i].type == LayerType::fc) last_fc = i;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const Layer& l = used.layers[i];
      const CTensor& in = i == 0 ? rec.x : rec.act[i - 1];
      CTensor out;
      std::vector<Ciphertext> bias;
      switch (l.type) {
        case LayerType::conv:
          if (!l.conv.bias.empty()) bias = ahe.enc_many(l.conv.bias, rng);
          out = conv_enc(c, l.conv, in, bias);
          if (cfg.attack == Attack::tampered_conv && !tampered_conv) {
            tamper(out, rng, ahe);
            tampered_conv = true;
          }
          break;
        case LayerType::avgpool: {
          std::int64_t kp = pool_constant(l.pool.k, model.f);
          out = cfg.attack == Attack::skipped_pool ? fake_pool(c, l.pool.k, kp, in)
                                                   : pool_scale_enc(c, pool_sum_enc(c, l.pool.k, in), kp);
          break;
        }
        case LayerType::fc: {
          bias = ahe.enc_many(l.fc.b, rng);
          auto t = fc_enc(c, l.fc, flatten(in), bias);
          out = reshape(t, l.fc.h, 1, 1);
          if (cfg.attack == Attack::tampered_fc && i == last_fc) tamper(out, rng, ahe);
          break;
        }
      }
      rec.out.push_back(out);
      rec.bias.push_back(std::move(bias));
      state.advance(Phase::layer_done);
      if (i + 1 == n) break;
      ep.send(MsgType::act_request, layer_tensor_payload(i, out));
      CTensor act = read_layer_tensor(ep.expect(MsgType::act_response), i);
      check_shape(act, shapes[i + 1], "activation");
      rec.act.push_back(std::move(act));
      state.advance(Phase::act_done);
    }

    cps::Opening aux_open{aux_vector(rec), rng.scalar_below(e1_default().order)};
    cps::Commitment aux_cm = cps::commit(aux_open.values, aux_open.blinding, pp);
    ep.send(MsgType::result, result_payload(n - 1, rec.out.back(), aux_cm, rec.bias));

    Digest seed;
    if (interactive) {
      Message ch_msg = ep.expect(MsgType::challenge);
      if (ch_msg.payload.size() != 32) malformed("bad CHALLENGE");
      std::copy(ch_msg.payload.begin(), ch_msg.payload.end(), seed.begin());
    } else {
      seed = ep.tr.digest();
    }
    state.advance(Phase::challenges_fixed);

    auto t0 = Clock::now();
    auto sts = build_statements(model, rec, seed);
    rlc::SessionCircuit circuit(sts);
    std::vector<cps::Opening> opens{used_open, aux_open};
    cps::ProofBundle proof;
    try {
      proof = cps::prove(circuit, opens, pp, &rep.circuit);
    } catch (const cps::CpsError& e) {
      if (cfg.attack == Attack::none) fail(ProtocolError::Code::proving_failed, e.what());
      // a cheating server sends a proof anyway, claiming the verifier's own public inputs
      std::vector<cps::Opening> claimed{model_open, aux_open};
      proof = cps::assemble_reference(claimed, rlc::public_inputs(sts));
    }
    Bytes pb = cps::serialize(proof);
    rep.prove_seconds = seconds_since(t0);
    if (cfg.attack == Attack::bitflip_proof) {
      std::uint64_t bit = rng.uniform(pb.size() * 8);
      pb[bit / 8] ^= std::uint8_t(1u << (bit % 8));
    }
    rep.proof_bytes = pb.size();
    state.advance(Phase::proved);
    ep.send(MsgType::proof, std::move(pb));
    rep.completed = true;
    rep.record = std::move(rec);
    rep.seed = seed;
  } catch (const ProtocolError& e) {
    rep.error = std::string(to_string(e.code)) + ": " + e.what();
    if (e.code != ProtocolError::Code::peer_abort && e.code != ProtocolError::Code::io) ep.abort(e.code, e.what());
  } catch (const std::exception& e) {
    rep.error = std::string("internal: ") + e.what();
    ep.abort(ProtocolError::Code::internal, e.what());
  }
  return rep;
}

// ---------------------------------------------------------------------------------------------
// Verification of a recorded session

namespace {

struct ParsedSession {
  Params params;
  cps::Commitment cm;
  SessionRecord rec;
  cps::Commitment aux_cm;
  Digest seed{};
};

ParsedSession parse_session(std::span<const Message> frames) {
  ParsedSession ps;
  Transcript tr;
  std::size_t i = 0;
  auto next = [&](MsgType t) -> const Message& {
    if (i >= frames.size()) malformed(std::string("transcript ends before ") + to_string(t));
    const Message& m = frames[i++];
    tr.append(m);
    if (m.type == MsgType::abort) fail(ProtocolError::Code::peer_abort, "session was aborted");
    if (m.type != t) fail(ProtocolError::Code::bad_state, std::string("transcript has ") + to_string(m.type) + " where " + to_string(t) + " belongs");
    return m;
  };
  const Message& hello = next(MsgType::hello);
  if (hello.payload.size() != 2 || hello.payload[0] != kVersion || hello.payload[1] > 1) malformed("bad HELLO");
  const bool interactive = hello.payload[1] == 1;
  ps.params = read_params(next(MsgType::params));
  const Model& arch = ps.params.arch;
  const auto shapes = trace_shapes(arch).shapes;
  const std::size_t n = arch.layers.size();
  SessionState state(n);
  if (next(MsgType::pubkey).payload.size() != 33) malformed("bad PUBKEY");
  state.advance(Phase::keyed);
  {
    Reader r(next(MsgType::commit).payload);
    ps.cm = get_commitment(r);
    r.done();
  }
  state.advance(Phase::committed);
  {
    Reader r(next(MsgType::sample).payload);
    ps.rec.x = get_tensor(r);
    r.done();
    check_shape(ps.rec.x, shapes[0], "sample");
  }
  state.advance(Phase::sample_sent);
  for (std::size_t l = 0; l + 1 < n; ++l) {
    CTensor out = read_layer_tensor(next(MsgType::act_request), l);
    check_shape(out, shapes[l + 1], "layer output");
    ps.rec.out.push_back(std::move(out));
    state.advance(Phase::layer_done);
    CTensor act = read_layer_tensor(next(MsgType::act_response), l);
    check_shape(act, shapes[l + 1], "activation");
    ps.rec.act.push_back(std::move(act));
    state.advance(Phase::act_done);
  }
  ResultMsg res = read_result(next(MsgType::result), n - 1);
  check_shape(res.logits, shapes[n], "result");
  for (std::size_t l = 0; l < n; ++l) {
    if (res.bias[l].size() != expected_bias_count(arch.layers[l])) fail(ProtocolError::Code::shape_mismatch, "bias ciphertext count");
  }
  ps.rec.out.push_back(std::move(res.logits));
  ps.rec.bias = std::move(res.bias);
  ps.aux_cm = res.aux_cm;
  state.advance(Phase::layer_done);
  if (interactive) {
    const Message& m = next(MsgType::challenge);
    if (m.payload.size() != 32) malformed("bad CHALLENGE");
    std::copy(m.payload.begin(), m.payload.end(), ps.seed.begin());
  } else {
    // the Fiat-Shamir seed covers everything up to and including RESULT
    ps.seed = tr.digest();
  }
  state.advance(Phase::challenges_fixed);
  return ps;
}

}  // namespace

cps::VerifyResult verify_transcript(std::span<const Message> frames, std::span<const std::uint8_t> proof_bytes,
                                    const cps::Commitment& cm) {
  auto reject = [](std::string why) { return cps::VerifyResult{false, std::move(why)}; };
  ParsedSession ps;
  try {
    ps = parse_session(frames);
  } catch (const std::exception& e) {
    return reject(std::string("transcript: ") + e.what());
  }
  if (!(ps.cm == cm)) return reject("model commitment differs from the one the session was run against");
  cps::ProofBundle proof;
  try {
    proof = cps::deserialize(proof_bytes);
  } catch (const cps::CpsError& e) {
    return reject(std::string("proof: ") + e.what());
  }
  std::vector<rlc::Statement> sts;
  try {
    sts = build_statements(ps.params.arch, ps.rec, ps.seed);
  } catch (const std::exception& e) {
    return reject(std::string("statements: ") + e.what());
  }
  const auto& pp = public_params(ps.params.domain, ps.params.max_len);
  rlc::SessionCircuit circuit(sts);
  std::vector<cps::Commitment> cms{cm, ps.aux_cm};
  auto vr = cps::verify(proof, cms, rlc::public_inputs(sts), circuit, pp);
  if (!vr) return vr;
  // cm' must open to exactly the bias ciphertexts the statements used
  auto opens = cps::reference_openings(proof);
  if (opens.size() != 2 || opens[1].values != aux_vector(ps.rec)) return reject("aux opening does not match the bias ciphertexts");
  return vr;
}

// ---------------------------------------------------------------------------------------------
// Client

ClientReport run_client(Channel& ch, const Sample& sample, const ClientConfig& cfg) {
  ClientReport rep;
  auto t_start = Clock::now();
  Endpoint ep(ch);
  Rng rng = cfg.seeded ? Rng(cfg.seed) : Rng();
  const E2Params& c = e2_default();
  try {
    ep.send(MsgType::hello, Bytes{kVersion, std::uint8_t(cfg.interactive ? 1 : 0)});
    Params params = read_params(ep.expect(MsgType::params));
    const Model& arch = params.arch;
    const auto shapes = trace_shapes(arch).shapes;
    const std::size_t n = arch.layers.size();
    SessionState state(n);

    Ahe ahe(c);
    KeyPair kp = cfg.key ? *cfg.key : ahe.keygen(rng);
    ahe.set_public_key(kp.pk);
    auto table = cfg.table ? cfg.table : std::make_shared<const BsgsTable>(c, cfg.baby_bits);
    Decryptor dec(kp.sk, table, c);
    Bytes pkb;
    put_point33(pkb, encode_point(kp.pk));
    ep.send(MsgType::pubkey, std::move(pkb));
    state.advance(Phase::keyed);

    {
      Message cmsg = ep.expect(MsgType::commit);
      Reader r(cmsg.payload);
      rep.cm = get_commitment(r);
      r.done();
    }
    state.advance(Phase::committed);

    if (sample.x.c != arch.in_ch || sample.x.h != arch.in_h || sample.x.w != arch.in_w) {
      fail(ProtocolError::Code::shape_mismatch, "sample shape does not match the served architecture");
    }
    Bytes sp;
    try {
      put_tensor(sp, encrypt_tensor(ahe, sample.x, rng));
    } catch (const AheError& e) {
      fail(ProtocolError::Code::overflow, std::string("sample: ") + e.what());
    }
    ep.send(MsgType::sample, std::move(sp));
    state.advance(Phase::sample_sent);

    for (std::size_t l = 0; l + 1 < n; ++l) {
      CTensor out = read_layer_tensor(ep.expect(MsgType::act_request), l);
      check_shape(out, shapes[l + 1], "layer output");
      state.advance(Phase::layer_done);
      std::vector<std::int64_t> plain;
      std::vector<Ciphertext> act;
      try {
        act = trelu_client(dec, ahe, out.data, arch.zeta, rng, &plain, cfg.bound_bits);
      } catch (const AheError& e) {
        fail(ProtocolError::Code::overflow, "layer " + std::to_string(l) + ": " + e.what());
      }
      ITensor pt(out.c, out.h, out.w);
      pt.data = std::move(plain);
      rep.decrypted.push_back(std::move(pt));
      CTensor at(out.c, out.h, out.w);
      at.data = std::move(act);
      ep.send(MsgType::act_response, layer_tensor_payload(l, at));
      state.advance(Phase::act_done);
    }

    ResultMsg res = read_result(ep.expect(MsgType::result), n - 1);
    check_shape(res.logits, shapes[n], "result");
    state.advance(Phase::layer_done);
    if (cfg.interactive) {
      Bytes s(32);
      rng.fill(s);
      ep.send(MsgType::challenge, std::move(s));
    }
    state.advance(Phase::challenges_fixed);

    Message pm = ep.expect(MsgType::proof);
    rep.proof = pm.payload;
    state.advance(Phase::proved);

    auto t0 = Clock::now();
    auto vr = verify_transcript(ep.tr.messages(), rep.proof, rep.cm);
    rep.verify_seconds = seconds_since(t0);
    if (!vr) {
      state.abort();
      rep.outcome = Outcome::rejected;
      rep.reason = vr.reason;
    } else {
      state.advance(Phase::verified);
      try {
        rep.logits = dec.dec_many(res.logits.data, cfg.bound_bits);
      } catch (const AheError& e) {
        fail(ProtocolError::Code::overflow, std::string("logits: ") + e.what());
      }
      rep.prediction = int(std::max_element(rep.logits.begin(), rep.logits.end()) - rep.logits.begin());
      rep.outcome = Outcome::accepted;
    }
  } catch (const ProtocolError& e) {
    rep.outcome = Outcome::aborted;
    rep.reason = std::string(to_string(e.code)) + ": " + e.what();
    if (e.code != ProtocolError::Code::peer_abort && e.code != ProtocolError::Code::io) ep.abort(e.code, e.what());
  } catch (const std::exception& e) {
    rep.outcome = Outcome::aborted;
    rep.reason = std::string("internal: ") + e.what();
    ep.abort(ProtocolError::Code::internal, e.what());
  }
  rep.transcript = std::move(ep.tr);
  rep.total_seconds = seconds_since(t_start);
  return rep;
}

LocalRun run_local(const Model& model, const Sample& sample, const ClientConfig& ccfg, const ServerConfig& scfg) {
  auto [a, b] = memory_pipe();
  LocalRun out;
  std::thread srv([&, ch = std::move(b)]() mutable {
    out.server = serve_session(*ch, model, scfg);
    ch.reset();
  });
  out.client = run_client(*a, sample, ccfg);
  a.reset();
  srv.join();
  return out;
}

}  // namespace vpin::proto
