// OpenMP kernels against their single-threaded references.
//
//   build/bench/bench_kernels --benchmark_filter=Conv

#include <benchmark/benchmark.h>

#include "vpin/cpsnark.hpp"
#include "vpin/layers.hpp"
#include "vpin/r1cs.hpp"

using namespace vpin;

namespace {

const E2Params& C() { return e2_default(); }

struct Fixture {
  Ahe ahe;
  Rng rng{7};
  Fixture() { ahe.set_public_key(ahe.keygen(rng).pk); }
  CTensor tensor(int c, int h, int w) {
    ITensor x(c, h, w);
    for (auto& v : x.data) v = static_cast<std::int64_t>(rng.uniform(1 << 16));
    return encrypt_tensor(ahe, x, rng);
  }
};

Fixture& fx() {
  static Fixture f;
  return f;
}

ConvSpec conv_spec(int in_ch, int out_ch, Rng& rng) {
  ConvSpec s{3, 1, 1, in_ch, out_ch, {}, {}};
  for (int i = 0; i < 9 * in_ch * out_ch; ++i) s.w.push_back(static_cast<std::int32_t>(rng.uniform(1 << 17)) - (1 << 16));
  return s;
}

template <bool Serial>
void BM_Conv(benchmark::State& st) {
  auto& f = fx();
  const int n = static_cast<int>(st.range(0));
  auto in = f.tensor(1, n, n);
  auto spec = conv_spec(1, 2, f.rng);
  for (auto _ : st) {
    auto out = Serial ? conv_enc_serial(C(), spec, in, {}) : conv_enc(C(), spec, in, {});
    benchmark::DoNotOptimize(out.data.data());
  }
  st.SetItemsProcessed(st.iterations() * 2 * n * n);
}
BENCHMARK(BM_Conv<false>)->Name("Conv/parallel")->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv<true>)->Name("Conv/serial")->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

template <bool Serial>
void BM_Fc(benchmark::State& st) {
  auto& f = fx();
  const int g = static_cast<int>(st.range(0)), h = 16;
  auto d = f.tensor(1, 1, g).data;
  FcSpec s{g, h, {}, std::vector<std::int64_t>(h, 0)};
  for (int i = 0; i < g * h; ++i) s.w.push_back(static_cast<std::int32_t>(f.rng.uniform(1 << 17)) - (1 << 16));
  auto bias = f.tensor(1, 1, h).data;
  for (auto _ : st) {
    auto out = Serial ? fc_enc_serial(C(), s, d, bias) : fc_enc(C(), s, d, bias);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(st.iterations() * g * h);
}
BENCHMARK(BM_Fc<false>)->Name("Fc/parallel")->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Fc<true>)->Name("Fc/serial")->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

template <bool Serial>
void BM_Commit(benchmark::State& st) {
  const std::size_t n = static_cast<std::size_t>(st.range(0));
  static auto pp = cps::setup(128, 1 << 14);
  Rng rng(3);
  std::vector<cps::Fq> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(cps::fq_of(static_cast<std::int64_t>(rng.uniform(1 << 20)) - (1 << 19)));
  U256 r = rng.scalar_below(e1_default().order);
  for (auto _ : st) {
    auto cm = Serial ? cps::commit_serial(v, r, pp) : cps::commit(v, r, pp);
    benchmark::DoNotOptimize(cm);
  }
  st.SetItemsProcessed(st.iterations() * n);
}
BENCHMARK(BM_Commit<false>)->Name("Commit/parallel")->Arg(1 << 10)->Arg(1 << 14)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Commit<true>)->Name("Commit/serial")->Arg(1 << 10)->Arg(1 << 14)->Unit(benchmark::kMillisecond);

template <bool Serial>
void BM_R1csCheck(benchmark::State& st) {
  r1cs::ConstraintSystem cs;
  Rng rng(5);
  for (int i = 0; i < st.range(0); ++i) {
    auto p = r1cs::alloc_point(cs, pt_mul(C(), u256(rng.next_u64()), C().g));
    r1cs::pt_mul_gadget(cs, C(), cs.alloc(r1cs::Fq::from_u64(rng.next_u64())), p);
  }
  for (auto _ : st) benchmark::DoNotOptimize(Serial ? cs.is_satisfied_serial() : cs.is_satisfied());
  st.SetItemsProcessed(st.iterations() * cs.num_constraints());
}
BENCHMARK(BM_R1csCheck<false>)->Name("R1csCheck/parallel")->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_R1csCheck<true>)->Name("R1csCheck/serial")->Arg(16)->Unit(benchmark::kMillisecond);

template <bool Serial>
void BM_Encrypt(benchmark::State& st) {
  auto& f = fx();
  std::vector<std::int64_t> ms(static_cast<std::size_t>(st.range(0)));
  for (auto& m : ms) m = static_cast<std::int64_t>(f.rng.uniform(1 << 16));
  for (auto _ : st) {
    if (Serial) {
      for (auto m : ms) benchmark::DoNotOptimize(f.ahe.enc(m, f.rng));
    } else {
      benchmark::DoNotOptimize(f.ahe.enc_many(ms, f.rng));
    }
  }
  st.SetItemsProcessed(st.iterations() * ms.size());
}
BENCHMARK(BM_Encrypt<false>)->Name("Encrypt/batched")->Arg(1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Encrypt<true>)->Name("Encrypt/one-by-one")->Arg(1024)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
