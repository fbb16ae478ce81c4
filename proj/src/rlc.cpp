#include "vpin/rlc.hpp"

namespace vpin::rlc {

namespace {

using Jac = JacPoint<FeQ1>;
using r1cs::CircuitPoint;
using r1cs::ConstraintSystem;
using r1cs::Fq;
using r1cs::Lc;
using r1cs::VarKind;

constexpr U256 kTwo127{0, 0x8000000000000000ull, 0, 0};

const E2Point& comp(const PointPair& p, int which) { return which == 0 ? p.c1 : p.c2; }

Digest hmac(const Digest& key, std::span<const std::uint8_t> msg) { return hmac_sha256(key, msg); }

U256 leading_bits(const Digest& d, unsigned bits) {
  U256 v = u256_from_be(std::span<const std::uint8_t>(d.data(), (bits + 7) / 8));
  return shr(v, (8 - bits % 8) % 8);
}

U256 fr_u(const Fr& x) { return x.to_u256(); }

PointPair msm_pair(const std::vector<PointPair>& pts, const std::vector<U256>& sc) {
  const E2Params& c = e2_default();
  std::vector<E2Point> a(pts.size()), b(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    a[i] = pts[i].c1;
    b[i] = pts[i].c2;
  }
  return PointPair{to_affine(msm_parallel<FeQ1>(c, a, sc)), to_affine(msm_parallel<FeQ1>(c, b, sc))};
}

PointPair mul_pair(const U256& k, const PointPair& p) {
  const E2Params& c = e2_default();
  return PointPair{pt_mul(c, k, p.c1), pt_mul(c, k, p.c2)};
}

PointPair sub_pair(const PointPair& a, const PointPair& b) {
  const E2Params& c = e2_default();
  return PointPair{pt_sub(c, a.c1, b.c1), pt_sub(c, a.c2, b.c2)};
}

Fq fq_small(const U256& v) { return Fq::from_canonical(v); }

// sum_t coeff_t * committed[offset_t] + 2^127
Lc scalar_lc(ConstraintSystem& cs, std::span<const cps::Fq> model, std::span<const U256> coeff,
             const std::vector<std::size_t>& offsets) {
  Lc lc = Lc::constant(Fq::from_canonical(kTwo127));
  for (std::size_t t = 0; t < offsets.size(); ++t) {
    if (offsets[t] >= model.size()) throw r1cs::GadgetError("committed model vector too short");
    r1cs::Var v = cs.alloc_committed(0, model[offsets[t]]);
    lc.add(v, fq_small(coeff[t]));
  }
  return lc;
}

// Adds xs in order; the final addition writes into out.
void sum_into(ConstraintSystem& cs, const std::vector<CircuitPoint>& xs, const CircuitPoint& out) {
  const E2Params& c = e2_default();
  CircuitPoint acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = r1cs::pt_add_gadget(cs, c, acc, xs[i], i + 1 == xs.size() ? &out : nullptr);
}

}  // namespace

Challenge derive_challenge(const Digest& digest, std::string_view label) {
  for (unsigned ctr = 0;; ++ctr) {
    std::string msg(label);
    if (ctr) msg += "#" + std::to_string(ctr);
    U256 g = leading_bits(hmac(digest, as_bytes(msg)), 128);
    if (!is_zero(g)) return Challenge{g, std::string(label)};
  }
}

U256 derive_coeff(const Digest& digest, std::string_view label, std::uint32_t index, unsigned bits) {
  for (std::uint32_t ctr = 0;; ++ctr) {
    Bytes msg(label.begin(), label.end());
    put_u32be(msg, index);
    if (ctr) put_u32be(msg, ctr);
    U256 v = leading_bits(hmac(digest, msg), bits);
    if (!is_zero(v)) return v;
  }
}

FlattenedConv flatten_conv(const CTensor& in, int k, int stride, int pad) {
  int hh = in.h + 2 * pad - k, ww = in.w + 2 * pad - k;
  if (k < 1 || stride < 1 || hh < 0 || ww < 0 || hh % stride || ww % stride) throw ModelError("flatten_conv: shape mismatch");
  int oh = hh / stride + 1, ow = ww / stride + 1;
  FlattenedConv f;
  f.rows = oh * ow;
  f.cols = in.c * k * k;
  f.c_hat.resize(std::size_t(f.rows) * f.cols);
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      for (int c = 0; c < in.c; ++c) {
        for (int a = 0; a < k; ++a) {
          for (int b = 0; b < k; ++b) {
            int y = i * stride + a - pad, x = j * stride + b - pad;
            Ciphertext ct;  // trivial encryption of 0 for padding
            if (y >= 0 && x >= 0 && y < in.h && x < in.w) ct = in.at(c, y, x);
            f.c_hat[std::size_t(i * ow + j) * f.cols + (c * k + a) * k + b] = ct;
          }
        }
      }
    }
  }
  return f;
}

ConvStatement aggregate_conv(const ConvSpec& s, const CTensor& in, const CTensor& out, std::span<const Ciphertext> bias,
                             const U256& gamma, std::span<const U256> delta) {
  FlattenedConv f = flatten_conv(in, s.k, s.stride, s.pad);
  if (out.c != s.out_ch || std::size_t(out.h) * out.w != std::size_t(f.rows)) throw ModelError("aggregate_conv: output shape");
  if (delta.size() != std::size_t(s.out_ch)) throw ModelError("aggregate_conv: delta count");
  if (!bias.empty() && bias.size() != std::size_t(s.out_ch)) throw ModelError("aggregate_conv: bias count");
  ConvStatement st;
  st.in_ch = s.in_ch;
  st.out_ch = s.out_ch;
  st.k = s.k;
  st.delta.assign(delta.begin(), delta.end());

  const Fr g = Fr::from_canonical(gamma);
  std::vector<Fr> pw(f.rows);
  Fr acc = g, total;
  for (int r = 0; r < f.rows; ++r) {
    pw[r] = acc;
    total += acc;
    acc = acc * g;
  }
  std::vector<U256> pw_u(f.rows);
  for (int r = 0; r < f.rows; ++r) pw_u[r] = fr_u(pw[r]);

  st.columns.resize(f.cols);
  std::vector<PointPair> col(f.rows);
  for (int j = 0; j < f.cols; ++j) {
    for (int r = 0; r < f.rows; ++r) col[r] = f.at(r, j);
    st.columns[j] = msm_pair(col, pw_u);
  }

  // T = sum_o delta_o sum_cell g^(cell+1) (A[o][cell] - b_o) + 2^127 sum_j P_j
  std::vector<PointPair> pts;
  std::vector<U256> sc;
  pts.reserve(out.size() + bias.size() + st.columns.size());
  for (int o = 0; o < s.out_ch; ++o) {
    Fr d = Fr::from_canonical(delta[o]);
    for (int r = 0; r < f.rows; ++r) {
      pts.push_back(out.data[std::size_t(o) * f.rows + r]);
      sc.push_back(fr_u(d * pw[r]));
    }
    if (!bias.empty()) {
      pts.push_back(bias[o]);
      sc.push_back(fr_u(-(d * total)));
    }
  }
  for (const auto& p : st.columns) {
    pts.push_back(p);
    sc.push_back(kTwo127);
  }
  st.target = msm_pair(pts, sc);
  return st;
}

PoolStatement aggregate_pool(int k, std::int64_t kp, const CTensor& in, const CTensor& out) {
  if (k < 1 || in.h % k || in.w % k || out.c != in.c || out.h != in.h / k || out.w != in.w / k) {
    throw ModelError("aggregate_pool: shape mismatch");
  }
  PoolStatement st;
  st.window = k * k;
  U256 kinv = fr_u(Fr::from_i64(kp).inv());
  for (int ch = 0; ch < out.c; ++ch) {
    for (int i = 0; i < out.h; ++i) {
      for (int j = 0; j < out.w; ++j) {
        for (int a = 0; a < k; ++a) {
          for (int b = 0; b < k; ++b) st.points.push_back(in.at(ch, i * k + a, j * k + b));
        }
        st.sums.push_back(mul_pair(kinv, out.at(ch, i, j)));
      }
    }
  }
  return st;
}

FcStatement aggregate_fc(const FcSpec& s, std::span<const Ciphertext> d, std::span<const Ciphertext> t,
                         std::span<const Ciphertext> bias, std::span<const U256> rho) {
  if (d.size() != std::size_t(s.g) || t.size() != std::size_t(s.h) || bias.size() != std::size_t(s.h) ||
      rho.size() != std::size_t(s.h)) {
    throw ModelError("aggregate_fc: shape mismatch");
  }
  const E2Params& c = e2_default();
  FcStatement st;
  st.g = s.g;
  st.h = s.h;
  st.rho.assign(rho.begin(), rho.end());
  st.d.assign(d.begin(), d.end());
  Jac s1 = Jac::infinity(), s2 = Jac::infinity();
  for (const auto& x : d) {
    s1 = jac_add_mixed(c, s1, x.c1);
    s2 = jac_add_mixed(c, s2, x.c2);
  }
  st.big_d = PointPair{pt_mul(c, kTwo127, to_affine(s1)), pt_mul(c, kTwo127, to_affine(s2))};
  for (int i = 0; i < s.h; ++i) st.e.push_back(mul_pair(rho[i], sub_pair(t[i], bias[i])));
  return st;
}

bool holds(const ConvStatement& st, std::span<const std::int64_t> filters) {
  const int cols = st.in_ch * st.k * st.k;
  if (filters.size() != std::size_t(st.out_ch) * cols) return false;
  std::vector<U256> sc(cols);
  for (int j = 0; j < cols; ++j) {
    Fr acc = Fr::from_canonical(kTwo127);
    for (int o = 0; o < st.out_ch; ++o) acc += Fr::from_canonical(st.delta[o]) * Fr::from_i64(filters[std::size_t(o) * cols + j]);
    sc[j] = fr_u(acc);
  }
  return msm_pair(st.columns, sc) == st.target;
}

bool holds(const PoolStatement& st) {
  const E2Params& c = e2_default();
  for (std::size_t cell = 0; cell < st.sums.size(); ++cell) {
    Jac a = Jac::infinity(), b = Jac::infinity();
    for (int t = 0; t < st.window; ++t) {
      a = jac_add_mixed(c, a, st.points[cell * st.window + t].c1);
      b = jac_add_mixed(c, b, st.points[cell * st.window + t].c2);
    }
    if (!(to_affine(a) == st.sums[cell].c1) || !(to_affine(b) == st.sums[cell].c2)) return false;
  }
  return true;
}

bool holds(const FcStatement& st, std::span<const std::int64_t> weights) {
  if (weights.size() != std::size_t(st.g) * st.h) return false;
  std::vector<U256> sc(st.g);
  for (int j = 0; j < st.g; ++j) {
    Fr acc = Fr::from_canonical(kTwo127);
    for (int i = 0; i < st.h; ++i) acc += Fr::from_canonical(st.rho[i]) * Fr::from_i64(weights[std::size_t(i) * st.g + j]);
    sc[j] = fr_u(acc);
  }
  PointPair lhs = msm_pair(st.d, sc);
  std::vector<PointPair> pts = st.e;
  pts.push_back(st.big_d);
  std::vector<U256> ones(pts.size(), u256(1));
  return lhs == msm_pair(pts, ones);
}

void conv_statement_circuit(ConstraintSystem& cs, std::span<const cps::Fq> model, const ConvStatement& st, int which) {
  const E2Params& c = e2_default();
  const int cols = st.in_ch * st.k * st.k;
  if (st.columns.size() != std::size_t(cols)) throw r1cs::GadgetError("conv statement: column count");
  CircuitPoint target = r1cs::alloc_point(cs, comp(st.target, which), VarKind::pub);
  std::vector<CircuitPoint> xs;
  xs.reserve(cols);
  std::vector<std::size_t> offs(st.out_ch);
  for (int j = 0; j < cols; ++j) {
    for (int o = 0; o < st.out_ch; ++o) offs[o] = st.w_offset + std::size_t(o) * cols + j;
    Lc s = scalar_lc(cs, model, st.delta, offs);
    CircuitPoint p = r1cs::alloc_point(cs, comp(st.columns[j], which), VarKind::pub);
    xs.push_back(r1cs::pt_mul_gadget(cs, c, s, p, kScalarBits, cols == 1 ? &target : nullptr));
  }
  if (cols > 1) sum_into(cs, xs, target);
}

void pool_statement_circuit(ConstraintSystem& cs, const PoolStatement& st, int which) {
  for (std::size_t cell = 0; cell < st.sums.size(); ++cell) {
    const E2Point& sum = comp(st.sums[cell], which);
    if (st.window == 1) {
      // nothing to add; both sides are public
      if (!(comp(st.points[cell], which) == sum)) throw r1cs::GadgetError("pool statement: identity window mismatch");
      continue;
    }
    CircuitPoint s = r1cs::alloc_point(cs, sum, VarKind::pub);
    std::vector<CircuitPoint> xs;
    for (int t = 0; t < st.window; ++t) {
      xs.push_back(r1cs::alloc_point(cs, comp(st.points[cell * st.window + t], which), VarKind::pub));
    }
    sum_into(cs, xs, s);
  }
}

void fc_statement_circuit(ConstraintSystem& cs, std::span<const cps::Fq> model, const FcStatement& st, int which) {
  const E2Params& c = e2_default();
  std::vector<CircuitPoint> xs;
  std::vector<std::size_t> offs(st.h);
  for (int j = 0; j < st.g; ++j) {
    for (int i = 0; i < st.h; ++i) offs[i] = st.w_offset + std::size_t(i) * st.g + j;
    Lc s = scalar_lc(cs, model, st.rho, offs);
    CircuitPoint p = r1cs::alloc_point(cs, comp(st.d[j], which), VarKind::pub);
    xs.push_back(r1cs::pt_mul_gadget(cs, c, s, p, kScalarBits));
  }
  CircuitPoint x = xs[0];
  for (std::size_t j = 1; j < xs.size(); ++j) x = r1cs::pt_add_gadget(cs, c, x, xs[j]);
  // D + e_1 + ... + e_h must land on the same variables
  std::vector<CircuitPoint> rhs;
  rhs.push_back(r1cs::alloc_point(cs, comp(st.big_d, which), VarKind::pub));
  for (const auto& e : st.e) rhs.push_back(r1cs::alloc_point(cs, comp(e, which), VarKind::pub));
  sum_into(cs, rhs, x);
}

void SessionCircuit::synthesize(ConstraintSystem& cs, std::size_t part, std::span<const cps::Opening> committed) const {
  if (committed.empty()) throw r1cs::GadgetError("missing model opening");
  const auto& model = committed[0].values;
  const Statement& st = st_.at(part / 2);
  int which = static_cast<int>(part % 2);
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ConvStatement>) {
          conv_statement_circuit(cs, model, s, which);
        } else if constexpr (std::is_same_v<T, PoolStatement>) {
          pool_statement_circuit(cs, s, which);
        } else {
          fc_statement_circuit(cs, model, s, which);
        }
      },
      st);
}

std::vector<cps::Fq> public_inputs(std::span<const Statement> sts) {
  std::vector<Fq> out;
  auto push = [&](const E2Point& p) {
    out.push_back(p.inf ? Fq::zero() : p.x);
    out.push_back(p.inf ? Fq::zero() : p.y);
    out.push_back(p.inf ? Fq::one() : Fq::zero());
  };
  for (const auto& st : sts) {
    for (int which = 0; which < 2; ++which) {
      std::visit(
          [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ConvStatement>) {
              push(comp(s.target, which));
              for (const auto& p : s.columns) push(comp(p, which));
            } else if constexpr (std::is_same_v<T, PoolStatement>) {
              if (s.window == 1) return;
              for (std::size_t cell = 0; cell < s.sums.size(); ++cell) {
                push(comp(s.sums[cell], which));
                for (int t = 0; t < s.window; ++t) push(comp(s.points[cell * s.window + t], which));
              }
            } else {
              for (const auto& p : s.d) push(comp(p, which));
              push(comp(s.big_d, which));
              for (const auto& p : s.e) push(comp(p, which));
            }
          },
          st);
    }
  }
  return out;
}

OpCount closed_form(const Statement& st) {
  return std::visit(
      [](const auto& s) -> OpCount {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ConvStatement>) {
          std::uint64_t n = std::uint64_t(s.in_ch) * s.k * s.k;
          return {n, n - 1};
        } else if constexpr (std::is_same_v<T, PoolStatement>) {
          return {0, std::uint64_t(s.window - 1) * s.sums.size()};
        } else {
          return {std::uint64_t(s.g), std::uint64_t(s.g - 1 + s.h)};
        }
      },
      st);
}

}  // namespace vpin::rlc
