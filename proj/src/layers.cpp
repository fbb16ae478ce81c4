#include "vpin/layers.hpp"

#include <omp.h>

namespace vpin {

namespace {

using Jac = JacPoint<FeQ1>;
using Tab = OddTable<FeQ1>;

const E2Point& comp(const Ciphertext& ct, int which) { return which == 0 ? ct.c1 : ct.c2; }

std::vector<Tab> tables_for(const E2Params& c, std::span<const Ciphertext> cts, int which) {
  std::vector<E2Point> pts(cts.size());
  for (std::size_t i = 0; i < cts.size(); ++i) pts[i] = comp(cts[i], which);
  return odd_tables<FeQ1>(c, pts);
}

std::vector<Ciphertext> join(const std::vector<Jac>& a, const std::vector<Jac>& b) {
  auto aa = batch_to_affine<FeQ1>(a), bb = batch_to_affine<FeQ1>(b);
  std::vector<Ciphertext> out(aa.size());
  for (std::size_t i = 0; i < aa.size(); ++i) out[i] = Ciphertext{aa[i], bb[i]};
  return out;
}

// One linear-combination job per output cell: (input index, weight) pairs plus an optional bias.
struct Job {
  std::vector<std::uint32_t> idx;
  std::vector<std::int64_t> w;
  int bias = -1;
};

std::vector<Ciphertext> run_jobs(const E2Params& c, std::span<const Ciphertext> in, std::span<const Ciphertext> bias,
                                 const std::vector<Job>& jobs) {
  std::vector<Jac> out[2];
  for (int which = 0; which < 2; ++which) {
    auto tabs = tables_for(c, in, which);
    out[which].resize(jobs.size());
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t t = 0; t < n; ++t) {
      const Job& jb = jobs[t];
      std::vector<const Tab*> tp(jb.idx.size());
      for (std::size_t i = 0; i < jb.idx.size(); ++i) tp[i] = &tabs[jb.idx[i]];
      Jac r = straus_i64<FeQ1>(c, tp, jb.w);
      if (jb.bias >= 0) r = jac_add_mixed(c, r, comp(bias[jb.bias], which));
      out[which][t] = r;
    }
  }
  return join(out[0], out[1]);
}

std::vector<Ciphertext> run_jobs_serial(const E2Params& c, std::span<const Ciphertext> in,
                                        std::span<const Ciphertext> bias, const std::vector<Job>& jobs) {
  std::vector<Jac> out[2];
  for (int which = 0; which < 2; ++which) {
    for (const Job& jb : jobs) {
      Jac r = Jac::infinity();
      for (std::size_t i = 0; i < jb.idx.size(); ++i) r = jac_add(c, r, jac_mul_i64(c, jb.w[i], comp(in[jb.idx[i]], which)));
      if (jb.bias >= 0) r = jac_add_mixed(c, r, comp(bias[jb.bias], which));
      out[which].push_back(r);
    }
  }
  return join(out[0], out[1]);
}

std::vector<Job> conv_jobs(const ConvSpec& s, const CTensor& in, std::span<const Ciphertext> bias, int& oh, int& ow) {
  if (in.c != s.in_ch) throw ModelError("conv: input channel mismatch");
  if (!bias.empty() && bias.size() != std::size_t(s.out_ch)) throw ModelError("conv: bias ciphertext count");
  int hh = in.h + 2 * s.pad - s.k, ww = in.w + 2 * s.pad - s.k;
  if (hh < 0 || ww < 0 || hh % s.stride || ww % s.stride) throw ModelError("conv: shape mismatch");
  oh = hh / s.stride + 1;
  ow = ww / s.stride + 1;
  std::vector<Job> jobs;
  jobs.reserve(std::size_t(s.out_ch) * oh * ow);
  for (int o = 0; o < s.out_ch; ++o) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        Job jb;
        for (int c = 0; c < s.in_ch; ++c) {
          for (int a = 0; a < s.k; ++a) {
            for (int b = 0; b < s.k; ++b) {
              int y = i * s.stride + a - s.pad, x = j * s.stride + b - s.pad;
              if (y < 0 || x < 0 || y >= in.h || x >= in.w) continue;  // zero padding contributes nothing
              std::int32_t wv = s.weight(o, c, a, b);
              if (wv == 0) continue;
              jb.idx.push_back(static_cast<std::uint32_t>(in.index(c, y, x)));
              jb.w.push_back(wv);
            }
          }
        }
        jb.bias = bias.empty() ? -1 : o;
        jobs.push_back(std::move(jb));
      }
    }
  }
  return jobs;
}

std::vector<Job> fc_jobs(const FcSpec& s, std::span<const Ciphertext> d, std::span<const Ciphertext> bias) {
  if (d.size() != std::size_t(s.g)) throw ModelError("fc: input length mismatch");
  if (bias.size() != std::size_t(s.h)) throw ModelError("fc: bias ciphertext count");
  std::vector<Job> jobs(s.h);
  for (int i = 0; i < s.h; ++i) {
    for (int j = 0; j < s.g; ++j) {
      if (s.weight(i, j) == 0) continue;
      jobs[i].idx.push_back(static_cast<std::uint32_t>(j));
      jobs[i].w.push_back(s.weight(i, j));
    }
    jobs[i].bias = i;
  }
  return jobs;
}

}  // namespace

CTensor conv_enc(const E2Params& c, const ConvSpec& s, const CTensor& in, std::span<const Ciphertext> bias_cts) {
  int oh = 0, ow = 0;
  auto jobs = conv_jobs(s, in, bias_cts, oh, ow);
  CTensor out(s.out_ch, oh, ow);
  out.data = run_jobs(c, in.data, bias_cts, jobs);
  return out;
}

CTensor conv_enc_serial(const E2Params& c, const ConvSpec& s, const CTensor& in, std::span<const Ciphertext> bias_cts) {
  int oh = 0, ow = 0;
  auto jobs = conv_jobs(s, in, bias_cts, oh, ow);
  CTensor out(s.out_ch, oh, ow);
  out.data = run_jobs_serial(c, in.data, bias_cts, jobs);
  return out;
}

CTensor pool_sum_enc(const E2Params& c, int k, const CTensor& in) {
  if (k < 1 || in.h % k || in.w % k) throw ModelError("pool: shape mismatch");
  CTensor out(in.c, in.h / k, in.w / k);
  std::vector<Jac> acc[2];
  for (int which = 0; which < 2; ++which) {
    acc[which].resize(out.size());
    for (int ch = 0; ch < out.c; ++ch) {
      for (int i = 0; i < out.h; ++i) {
        for (int j = 0; j < out.w; ++j) {
          Jac r = Jac::infinity();
          for (int a = 0; a < k; ++a) {
            for (int b = 0; b < k; ++b) r = jac_add_mixed(c, r, comp(in.at(ch, i * k + a, j * k + b), which));
          }
          acc[which][out.index(ch, i, j)] = r;
        }
      }
    }
  }
  out.data = join(acc[0], acc[1]);
  return out;
}

CTensor pool_scale_enc(const E2Params& c, const CTensor& sums, std::int64_t kp) {
  CTensor out(sums.c, sums.h, sums.w);
  std::vector<Jac> acc[2];
  for (int which = 0; which < 2; ++which) {
    acc[which].resize(sums.size());
    for (std::size_t i = 0; i < sums.size(); ++i) acc[which][i] = jac_mul_i64(c, kp, comp(sums.data[i], which));
  }
  out.data = join(acc[0], acc[1]);
  return out;
}

std::vector<Ciphertext> fc_enc(const E2Params& c, const FcSpec& s, std::span<const Ciphertext> d,
                               std::span<const Ciphertext> bias_cts) {
  return run_jobs(c, d, bias_cts, fc_jobs(s, d, bias_cts));
}

std::vector<Ciphertext> fc_enc_serial(const E2Params& c, const FcSpec& s, std::span<const Ciphertext> d,
                                      std::span<const Ciphertext> bias_cts) {
  return run_jobs_serial(c, d, bias_cts, fc_jobs(s, d, bias_cts));
}

std::vector<Ciphertext> flatten(const CTensor& t) { return t.data; }

CTensor reshape(std::span<const Ciphertext> v, int c, int h, int w) {
  if (v.size() != std::size_t(c) * h * w) throw ModelError("reshape: size mismatch");
  CTensor t(c, h, w);
  std::copy(v.begin(), v.end(), t.data.begin());
  return t;
}

CTensor encrypt_tensor(const Ahe& ahe, const ITensor& x, Rng& rng) {
  CTensor t(x.c, x.h, x.w);
  t.data = ahe.enc_many(x.data, rng);
  return t;
}

ITensor decrypt_tensor(const Decryptor& dec, const CTensor& x, int bound_bits) {
  ITensor t(x.c, x.h, x.w);
  t.data = dec.dec_many(x.data, bound_bits);
  return t;
}

std::vector<Ciphertext> trelu_client(const Decryptor& dec, const Ahe& ahe, std::span<const Ciphertext> in, int zeta,
                                     Rng& rng, std::vector<std::int64_t>* plain, int bound_bits) {
  auto vals = dec.dec_many(in, bound_bits);
  std::vector<std::int64_t> act(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) act[i] = trelu_value(vals[i], zeta);
  if (plain) *plain = vals;
  return ahe.enc_many(act, rng);
}

}  // namespace vpin
