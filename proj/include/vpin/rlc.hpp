#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vpin/cpsnark.hpp"
#include "vpin/layers.hpp"

namespace vpin::rlc {

using Fr = FeQ2;  // scalars of the cipher curve

inline constexpr unsigned kScalarBits = 128;  // in-circuit scalar width
inline constexpr unsigned kCoeffBits = 80;    // width of per-row / per-channel aggregation coefficients

struct Challenge {
  U256 gamma{};  // in [1, 2^128)
  std::string label;
};

// gamma = first 16 bytes (big endian) of HMAC-SHA256(key = digest, msg = label); a zero result is
// retried with "label#1", "label#2", ...
Challenge derive_challenge(const Digest& digest, std::string_view label);
// Independent coefficient in [1, 2^bits) from HMAC-SHA256(digest, label || be32(index)).
U256 derive_coeff(const Digest& digest, std::string_view label, std::uint32_t index, unsigned bits = kCoeffBits);

// (n'm') x (in_ch k^2) window matrix; padded positions hold the trivial ciphertext (inf, inf).
struct FlattenedConv {
  int rows = 0, cols = 0;
  std::vector<Ciphertext> c_hat;  // row-major
  const Ciphertext& at(int r, int c) const { return c_hat[std::size_t(r) * cols + c]; }
};
FlattenedConv flatten_conv(const CTensor& in, int k, int stride, int pad = 0);

// Both ciphertext components of a point-valued quantity.
using PointPair = Ciphertext;

// sum_j s_j P_j = T with s_j = sum_o delta_o F[o][j] + 2^127, committed F.
struct ConvStatement {
  std::size_t layer = 0;
  int in_ch = 1, out_ch = 1, k = 3;
  std::size_t w_offset = 0;    // start of this layer's filters in the committed model vector
  std::vector<U256> delta;     // per output channel, delta[0] = 1
  std::vector<PointPair> columns;
  PointPair target;
};

// Window sums of public points equal S = B / k' for every pooled cell.
struct PoolStatement {
  std::size_t layer = 0;
  int window = 4;                         // k^2 points per cell
  std::vector<PointPair> points;          // cells x window
  std::vector<PointPair> sums;            // cells
};

// sum_j w_j d_j = D + sum_i e_i with w_j = sum_i rho_i W[i][j] + 2^127, D = 2^127 sum_j d_j,
// e_i = rho_i (t_i - b_i).
struct FcStatement {
  std::size_t layer = 0;
  int g = 0, h = 0;
  std::size_t w_offset = 0;
  std::vector<U256> rho;
  std::vector<PointPair> d;
  PointPair big_d;
  std::vector<PointPair> e;
};

using Statement = std::variant<ConvStatement, PoolStatement, FcStatement>;

// Inputs to conv aggregation: the layer input, the server's output and the bias ciphertexts.
ConvStatement aggregate_conv(const ConvSpec& s, const CTensor& in, const CTensor& out, std::span<const Ciphertext> bias,
                             const U256& gamma, std::span<const U256> delta);
PoolStatement aggregate_pool(int k, std::int64_t kp, const CTensor& in, const CTensor& out);
FcStatement aggregate_fc(const FcSpec& s, std::span<const Ciphertext> d, std::span<const Ciphertext> t,
                         std::span<const Ciphertext> bias, std::span<const U256> rho);

// Native check of a statement against concrete weights (test and debugging aid).
bool holds(const ConvStatement& st, std::span<const std::int64_t> filters);
bool holds(const PoolStatement& st);
bool holds(const FcStatement& st, std::span<const std::int64_t> weights);

// Circuit emission for one ciphertext component (0 = c1, 1 = c2). model is the opened model vector.
void conv_statement_circuit(r1cs::ConstraintSystem& cs, std::span<const cps::Fq> model, const ConvStatement& st,
                            int which);
void pool_statement_circuit(r1cs::ConstraintSystem& cs, const PoolStatement& st, int which);
void fc_statement_circuit(r1cs::ConstraintSystem& cs, std::span<const cps::Fq> model, const FcStatement& st,
                          int which);

// All statements of a session as one circuit, two parts (c1, c2) per statement. Committed vector 0
// is the model; vector 1 (aux) is not used inside the circuit.
class SessionCircuit : public cps::Circuit {
 public:
  explicit SessionCircuit(std::vector<Statement> st) : st_(std::move(st)) {}
  std::size_t num_parts() const override { return 2 * st_.size(); }
  void synthesize(r1cs::ConstraintSystem& cs, std::size_t part, std::span<const cps::Opening> committed) const override;
  const std::vector<Statement>& statements() const { return st_; }

 private:
  std::vector<Statement> st_;
};

// The public input vector SessionCircuit exposes, computed directly from the statements in the
// same order (per part: every allocated public point as x, y, inf).
std::vector<cps::Fq> public_inputs(std::span<const Statement> st);

// Per-statement op counts per ciphertext component, from the closed forms.
struct OpCount {
  std::uint64_t mults = 0, adds = 0;
};
OpCount closed_form(const Statement& st);

}  // namespace vpin::rlc
