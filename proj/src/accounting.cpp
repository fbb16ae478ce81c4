#include "vpin/accounting.hpp"

#include <chrono>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace vpin::acct {

namespace {

using r1cs::CircuitPoint;
using r1cs::ConstraintSystem;
using r1cs::Fq;
using r1cs::VarKind;

constexpr U256 kTwo127{0, 0x8000000000000000ull, 0, 0};

const char* type_name(LayerType t) {
  switch (t) {
    case LayerType::conv: return "conv";
    case LayerType::avgpool: return "avgpool";
    case LayerType::fc: return "fc";
  }
  return "?";
}

const E2Point& comp(const PointPair& p, int which) { return which == 0 ? p.c1 : p.c2; }

PointPair times_two127(const std::vector<PointPair>& pts) {
  const E2Params& c = e2_default();
  JacPoint<FeQ1> a = JacPoint<FeQ1>::infinity(), b = JacPoint<FeQ1>::infinity();
  for (const auto& p : pts) {
    a = jac_add_mixed(c, a, p.c1);
    b = jac_add_mixed(c, b, p.c2);
  }
  return PointPair{pt_mul(c, kTwo127, to_affine(a)), pt_mul(c, kTwo127, to_affine(b))};
}

PointPair add_pair(const PointPair& a, const PointPair& b) {
  const E2Params& c = e2_default();
  return PointPair{pt_add(c, a.c1, b.c1), pt_add(c, a.c2, b.c2)};
}

template <class F>
Profile build(const Model& arch, F per_layer) {
  Profile p;
  auto shapes = trace_shapes(arch).shapes;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    LayerCount lc{i, arch.layers[i].type, 0, 0};
    per_layer(i, arch.layers[i], shapes[i], shapes[i + 1], lc);
    lc.mults *= 2;
    lc.adds *= 2;
    p.layers.push_back(lc);
  }
  return p;
}

std::uint64_t cells(const std::array<int, 3>& s) { return std::uint64_t(s[0]) * s[1] * s[2]; }

void pool_and_fc(const Layer& l, const std::array<int, 3>& out, LayerCount& lc) {
  if (l.type == LayerType::avgpool) {
    lc.adds = std::uint64_t(l.pool.k * l.pool.k - 1) * cells(out);
  } else if (l.type == LayerType::fc) {
    lc.mults = std::uint64_t(l.fc.g);
    lc.adds = std::uint64_t(l.fc.g - 1 + l.fc.h);
  }
}

}  // namespace

std::uint64_t Profile::mults() const {
  std::uint64_t s = 0;
  for (const auto& l : layers) s += l.mults;
  return s;
}

std::uint64_t Profile::adds() const {
  std::uint64_t s = 0;
  for (const auto& l : layers) s += l.adds;
  return s;
}

Profile circuit_profile(const Model& arch) {
  return build(arch, [](std::size_t, const Layer& l, const auto&, const auto& out, LayerCount& lc) {
    if (l.type == LayerType::conv) {
      std::uint64_t n = std::uint64_t(l.conv.in_ch) * l.conv.k * l.conv.k;
      lc.mults = n;
      lc.adds = n - 1;
    } else {
      pool_and_fc(l, out, lc);
    }
  });
}

Profile reference_profile(const Model& arch) {
  bool first = true;
  return build(arch, [&](std::size_t, const Layer& l, const auto&, const auto& out, LayerCount& lc) {
    if (l.type == LayerType::conv) {
      const std::uint64_t k2 = std::uint64_t(l.conv.k) * l.conv.k;
      const std::uint64_t maps = first ? std::uint64_t(l.conv.out_ch) * l.conv.in_ch : std::uint64_t(l.conv.out_ch);
      lc.mults = maps * k2;
      lc.adds = maps * (k2 - 1);
      if (first) lc.adds += std::uint64_t(l.conv.in_ch - 1) * cells(out);
      first = false;
    } else {
      pool_and_fc(l, out, lc);
    }
  });
}

Profile baseline_profile(const Model& arch) {
  return build(arch, [](std::size_t, const Layer& l, const auto&, const auto& out, LayerCount& lc) {
    if (l.type == LayerType::conv) {
      std::uint64_t n = std::uint64_t(l.conv.in_ch) * l.conv.k * l.conv.k;
      lc.mults = cells(out) * n;
      lc.adds = cells(out) * (n - 1 + (l.conv.bias.empty() ? 0 : 1));
    } else if (l.type == LayerType::fc) {
      lc.mults = std::uint64_t(l.fc.g) * l.fc.h;
      lc.adds = std::uint64_t(l.fc.g) * l.fc.h;
    } else {
      pool_and_fc(l, out, lc);
    }
  });
}

Profile measure(const rlc::SessionCircuit& circuit, std::span<const cps::Opening> committed) {
  const auto& sts = circuit.statements();
  std::vector<r1cs::GadgetStats> per(circuit.num_parts());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(per.size()); ++p) {
    ConstraintSystem cs(ConstraintSystem::Mode::stream);
    circuit.synthesize(cs, std::size_t(p), committed);
    per[p] = cs.stats();
  }
  Profile out;
  for (std::size_t s = 0; s < sts.size(); ++s) {
    LayerCount lc;
    std::visit(
        [&](const auto& st) {
          using T = std::decay_t<decltype(st)>;
          lc.layer = st.layer;
          lc.type = std::is_same_v<T, rlc::ConvStatement> ? LayerType::conv
                    : std::is_same_v<T, rlc::PoolStatement> ? LayerType::avgpool
                                                            : LayerType::fc;
        },
        sts[s]);
    for (int w = 0; w < 2; ++w) {
      lc.mults += per[2 * s + w].n_point_mults;
      lc.adds += per[2 * s + w].n_point_adds;
    }
    out.layers.push_back(lc);
  }
  return out;
}

BaselineStatements baseline_statements(const Model& arch, const proto::SessionRecord& rec) {
  const std::size_t n = arch.layers.size();
  if (rec.out.size() != n || rec.act.size() + 1 != n || rec.bias.size() != n) throw ModelError("baseline: record shape");
  const ModelLayout L = model_layout(arch);
  BaselineStatements bs;
  for (std::size_t i = 0; i < n; ++i) {
    const Layer& l = arch.layers[i];
    const CTensor& in = i == 0 ? rec.x : rec.act[i - 1];
    if (l.type == LayerType::avgpool) {
      auto st = rlc::aggregate_pool(l.pool.k, pool_constant(l.pool.k, arch.f), in, rec.out[i]);
      st.layer = i;
      bs.pools.push_back(std::move(st));
    } else if (l.type == LayerType::conv) {
      const ConvSpec& s = l.conv;
      auto f = rlc::flatten_conv(in, s.k, s.stride, s.pad);
      for (int o = 0; o < s.out_ch; ++o) {
        for (int r = 0; r < f.rows; ++r) {
          BaselineRow row;
          row.layer = i;
          for (int j = 0; j < f.cols; ++j) {
            row.offsets.push_back(L.conv_w[i] + std::size_t(o) * f.cols + j);
            row.points.push_back(f.at(r, j));
          }
          row.has_bias = !s.bias.empty();
          if (row.has_bias) row.bias = rec.bias[i].at(o);
          row.target = add_pair(rec.out[i].data.at(std::size_t(o) * f.rows + r), times_two127(row.points));
          bs.rows.push_back(std::move(row));
        }
      }
    } else {
      const FcSpec& s = l.fc;
      auto d = flatten(in);
      PointPair big_d = times_two127(d);
      for (int r = 0; r < s.h; ++r) {
        BaselineRow row;
        row.layer = i;
        for (int j = 0; j < s.g; ++j) row.offsets.push_back(L.fc_w[i] + std::size_t(r) * s.g + j);
        row.points = d;
        row.has_bias = true;
        row.bias = rec.bias[i].at(r);
        row.target = add_pair(rec.out[i].data.at(r), big_d);
        bs.rows.push_back(std::move(row));
      }
    }
  }
  return bs;
}

void BaselineCircuit::synthesize(ConstraintSystem& cs, std::size_t part, std::span<const cps::Opening> committed) const {
  if (committed.empty()) throw r1cs::GadgetError("missing model opening");
  const auto& model = committed[0].values;
  const int which = static_cast<int>(part % 2);
  const std::size_t item = part / 2;
  if (item >= st_.rows.size()) {
    rlc::pool_statement_circuit(cs, st_.pools.at(item - st_.rows.size()), which);
    return;
  }
  const E2Params& c = e2_default();
  const BaselineRow& row = st_.rows[item];
  CircuitPoint target = r1cs::alloc_point(cs, comp(row.target, which), VarKind::pub);
  const bool lone = row.offsets.size() == 1 && !row.has_bias;  // a single product lands on the target itself
  std::vector<CircuitPoint> xs;
  for (std::size_t t = 0; t < row.offsets.size(); ++t) {
    if (row.offsets[t] >= model.size()) throw r1cs::GadgetError("committed model vector too short");
    r1cs::Lc s = r1cs::Lc::constant(Fq::from_canonical(kTwo127));
    s.add(cs.alloc_committed(0, model[row.offsets[t]]), Fq::one());
    CircuitPoint p = r1cs::alloc_point(cs, comp(row.points[t], which), VarKind::pub);
    xs.push_back(r1cs::pt_mul_gadget(cs, c, s, p, rlc::kScalarBits, lone ? &target : nullptr));
  }
  if (lone) return;
  if (row.has_bias) xs.push_back(r1cs::alloc_point(cs, comp(row.bias, which), VarKind::pub));
  CircuitPoint acc = xs[0];
  for (std::size_t t = 1; t < xs.size(); ++t) acc = r1cs::pt_add_gadget(cs, c, acc, xs[t], t + 1 == xs.size() ? &target : nullptr);
}

ReductionDemo reduction_demo(Rng& rng, int n, int k) {
  using Clock = std::chrono::steady_clock;
  const E2Params& c = e2_default();
  Ahe ahe(c);
  ahe.set_public_key(ahe.keygen(rng).pk);

  Model m;
  m.name = "reduction-demo";
  m.in_h = m.in_w = n;
  Layer l;
  l.type = LayerType::conv;
  l.conv = ConvSpec{k, 1, 0, 1, 1, {}, {}};
  for (int i = 0; i < k * k; ++i) l.conv.w.push_back(static_cast<std::int32_t>(rng.uniform(2001)) - 1000);
  m.layers = {l};

  proto::SessionRecord rec;
  ITensor x(1, n, n);
  for (auto& v : x.data) v = static_cast<std::int64_t>(rng.uniform(1 << 16));
  rec.x = encrypt_tensor(ahe, x, rng);
  rec.out = {conv_enc(c, l.conv, rec.x, {})};
  rec.bias = {{}};

  std::vector<cps::Fq> mv;
  for (auto w : model_vector(m)) mv.push_back(cps::fq_of(w));
  std::vector<cps::Opening> open{cps::Opening{mv, rng.scalar_below(e1_default().order)}};
  const auto& pp = proto::public_params(std::string(cps::kDomain), mv.size());
  std::vector<cps::Commitment> cms{cps::commit(open[0].values, open[0].blinding, pp)};

  ReductionDemo d;
  d.windows = (n - k + 1) * (n - k + 1);

  Bytes seed_src(8);
  rng.fill(seed_src);
  auto sts = proto::build_statements(m, rec, sha256(seed_src));
  rlc::SessionCircuit vc(sts);
  auto t0 = Clock::now();
  cps::CircuitReport vr;
  auto vp = cps::prove(vc, open, pp, &vr);
  d.vpin_prove_s = std::chrono::duration<double>(Clock::now() - t0).count();
  d.vpin_mults = vr.stats.n_point_mults;
  d.vpin_adds = vr.stats.n_point_adds;
  d.vpin_constraints = vr.stats.n_constraints;
  d.vpin_verified = cps::verify(vp, cms, rlc::public_inputs(sts), vc, pp).accept;

  BaselineCircuit bc(baseline_statements(m, rec));
  t0 = Clock::now();
  cps::CircuitReport br;
  auto bp = cps::prove(bc, open, pp, &br);
  d.base_prove_s = std::chrono::duration<double>(Clock::now() - t0).count();
  d.base_mults = br.stats.n_point_mults;
  d.base_adds = br.stats.n_point_adds;
  d.base_constraints = br.stats.n_constraints;
  d.base_verified = cps::verify(bp, cms, bp.public_inputs, bc, pp).accept;
  return d;
}

CountReport count_network(const std::string& network, const std::string& dataset) {
  if (dataset != "mnist" && dataset != "cifar10") throw ModelError("unknown dataset " + dataset);
  Rng rng(0);
  Model m = make_network(network, rng, 16, dataset == "cifar10" ? 3 : 1);
  return CountReport{network, dataset, circuit_profile(m), reference_profile(m), baseline_profile(m)};
}

std::string to_json(const CountReport& r) {
  using json = nlohmann::json;
  json layers = json::array();
  for (std::size_t i = 0; i < r.circuit.layers.size(); ++i) {
    const auto& c = r.circuit.layers[i];
    const auto& f = r.reference.layers[i];
    const auto& b = r.baseline.layers[i];
    layers.push_back({{"layer", c.layer},
                      {"type", type_name(c.type)},
                      {"point_mults", f.mults},
                      {"point_adds", f.adds},
                      {"constraints_vpin", constraints(f.mults, f.adds)},
                      {"circuit_point_mults", c.mults},
                      {"circuit_point_adds", c.adds},
                      {"circuit_constraints", constraints(c.mults, c.adds)},
                      {"baseline_point_mults", b.mults},
                      {"baseline_point_adds", b.adds},
                      {"constraints_baseline_wce", constraints(b.mults, b.adds)},
                      {"constraints_baseline_noce_estimate",
                       b.mults * r1cs::kNoCeMulRows + b.adds * r1cs::kNoCeAddRows}});
  }
  auto totals = [](const Profile& p) {
    return json{{"point_mults", p.mults()},
                {"point_adds", p.adds()},
                {"constraints_mults", p.mults() * r1cs::kPtMulRows},
                {"constraints_adds", p.adds() * r1cs::kPtAddRows},
                {"constraints", constraints(p.mults(), p.adds())}};
  };
  json b = totals(r.baseline);
  b["noce_estimate"] = r.baseline.mults() * r1cs::kNoCeMulRows + r.baseline.adds() * r1cs::kNoCeAddRows;
  json j = {{"network", r.network},
            {"dataset", r.dataset},
            {"per_gadget", {{"pt_mul", r1cs::kPtMulRows}, {"pt_add", r1cs::kPtAddRows}}},
            {"layers", layers},
            {"reference", totals(r.reference)},
            {"circuit", totals(r.circuit)},
            {"baseline_wce", b}};
  return j.dump(2);
}

std::string to_table(const CountReport& r) {
  std::ostringstream o;
  o << "network " << r.network << " (" << r.dataset << ")\n";
  o << std::left << std::setw(7) << "layer" << std::setw(9) << "type" << std::right << std::setw(10) << "mults"
    << std::setw(10) << "adds" << std::setw(15) << "constraints" << std::setw(12) << "circ.mults" << std::setw(12)
    << "circ.adds" << std::setw(14) << "base.mults" << std::setw(16) << "base.constr" << "\n";
  for (std::size_t i = 0; i < r.circuit.layers.size(); ++i) {
    const auto& c = r.circuit.layers[i];
    const auto& f = r.reference.layers[i];
    const auto& b = r.baseline.layers[i];
    o << std::left << std::setw(7) << c.layer << std::setw(9) << type_name(c.type) << std::right << std::setw(10)
      << f.mults << std::setw(10) << f.adds << std::setw(15) << constraints(f.mults, f.adds) << std::setw(12) << c.mults
      << std::setw(12) << c.adds << std::setw(14) << b.mults << std::setw(16) << constraints(b.mults, b.adds) << "\n";
  }
  o << "total point mults " << r.reference.mults() << ", point adds " << r.reference.adds() << "\n";
  o << "constraints " << r.reference.mults() * r1cs::kPtMulRows << " (mults) + " << r.reference.adds() * r1cs::kPtAddRows
    << " (adds) = " << constraints(r.reference.mults(), r.reference.adds()) << "\n";
  o << "session circuit: " << r.circuit.mults() << " mults, " << r.circuit.adds() << " adds, "
    << constraints(r.circuit.mults(), r.circuit.adds()) << " constraints\n";
  o << "baseline (no RLC): " << r.baseline.mults() << " mults, " << r.baseline.adds() << " adds, "
    << constraints(r.baseline.mults(), r.baseline.adds()) << " constraints with embedding, "
    << r.baseline.mults() * r1cs::kNoCeMulRows + r.baseline.adds() * r1cs::kNoCeAddRows << " estimated without\n";
  return o.str();
}

}  // namespace vpin::acct
