#pragma once

#include <span>
#include <vector>

#include "vpin/ahe.hpp"
#include "vpin/model.hpp"

namespace vpin {

using CTensor = Tensor<Ciphertext>;

// Server-side homomorphic layers. Each output cell is a linear combination of input ciphertexts
// with small signed weights. The default kernels share doublings across terms (Straus) and run
// OpenMP-parallel over output cells; the *_serial kernels multiply term by term on one thread and
// serve as the reference.

// bias_cts: empty, or one ciphertext per output channel added to every cell of that channel.
CTensor conv_enc(const E2Params& c, const ConvSpec& s, const CTensor& in, std::span<const Ciphertext> bias_cts);
CTensor conv_enc_serial(const E2Params& c, const ConvSpec& s, const CTensor& in, std::span<const Ciphertext> bias_cts);

// Window sums; the public scaling by k' is separate so both sides can reuse the sums.
CTensor pool_sum_enc(const E2Params& c, int k, const CTensor& in);
CTensor pool_scale_enc(const E2Params& c, const CTensor& sums, std::int64_t kp);

// t[i] = sum_j W[i][j] d[j] + bias_cts[i]
std::vector<Ciphertext> fc_enc(const E2Params& c, const FcSpec& s, std::span<const Ciphertext> d,
                               std::span<const Ciphertext> bias_cts);
std::vector<Ciphertext> fc_enc_serial(const E2Params& c, const FcSpec& s, std::span<const Ciphertext> d,
                                      std::span<const Ciphertext> bias_cts);

// Channel-major copy.
std::vector<Ciphertext> flatten(const CTensor& t);
CTensor reshape(std::span<const Ciphertext> v, int c, int h, int w);

// Client side: encrypt a fixed-point tensor cell by cell.
CTensor encrypt_tensor(const Ahe& ahe, const ITensor& x, Rng& rng);
ITensor decrypt_tensor(const Decryptor& dec, const CTensor& x, int bound_bits = kDefaultBoundBits);

// Client-aided truncated ReLU: decrypt, map a <= 0 to 0 and a > 0 to a >> zeta, re-encrypt fresh.
// The decrypted inputs are returned through plain when given.
std::vector<Ciphertext> trelu_client(const Decryptor& dec, const Ahe& ahe, std::span<const Ciphertext> in, int zeta,
                                     Rng& rng, std::vector<std::int64_t>* plain = nullptr,
                                     int bound_bits = kDefaultBoundBits);

}  // namespace vpin
