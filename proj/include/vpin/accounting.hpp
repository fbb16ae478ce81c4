#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vpin/protocol.hpp"

namespace vpin::acct {

using rlc::PointPair;

// Point op counts of one layer, both ciphertext components included.
struct LayerCount {
  std::size_t layer = 0;
  LayerType type = LayerType::conv;
  std::uint64_t mults = 0, adds = 0;
};

struct Profile {
  std::vector<LayerCount> layers;
  std::uint64_t mults() const;
  std::uint64_t adds() const;
};

inline std::uint64_t constraints(std::uint64_t mults, std::uint64_t adds) {
  return mults * r1cs::kPtMulRows + adds * r1cs::kPtAddRows;
}

// What SessionCircuit emits: conv in*k^2 mults and in*k^2 - 1 adds, pool (k^2 - 1) per cell,
// FC g mults and g - 1 + h adds.
Profile circuit_profile(const Model& arch);

// Per-feature-map accounting used for the published LeNet figures: the first conv proves one
// k x k statement per (output, input) channel pair plus the cross-channel additions of every
// output cell, later convs one statement per output map; pool and FC as in circuit_profile.
Profile reference_profile(const Model& arch);

// Without random linear combinations: one statement per conv output cell (in*k^2 mults,
// in*k^2 - 1 adds, plus one when the layer has a bias) and per FC row (g mults, g adds).
Profile baseline_profile(const Model& arch);

// Per-layer measured counts: every part of the circuit synthesized separately on real data.
Profile measure(const rlc::SessionCircuit& circuit, std::span<const cps::Opening> committed);

// One row of the baseline circuit: sum_t (w_t + 2^127) P_t (+ B) = T, weights from the committed
// model at the given offsets.
struct BaselineRow {
  std::size_t layer = 0;
  std::vector<std::size_t> offsets;
  std::vector<PointPair> points;
  bool has_bias = false;
  PointPair bias;
  PointPair target;
};

// Baseline-wce statement list for a recorded session: conv cells and FC rows as BaselineRow,
// pools as in the RLC circuit.
struct BaselineStatements {
  std::vector<BaselineRow> rows;
  std::vector<rlc::PoolStatement> pools;
};
BaselineStatements baseline_statements(const Model& arch, const proto::SessionRecord& rec);

class BaselineCircuit : public cps::Circuit {
 public:
  explicit BaselineCircuit(BaselineStatements st) : st_(std::move(st)) {}
  std::size_t num_parts() const override { return 2 * (st_.rows.size() + st_.pools.size()); }
  void synthesize(r1cs::ConstraintSystem& cs, std::size_t part, std::span<const cps::Opening> committed) const override;

 private:
  BaselineStatements st_;
};

// Conv layer alone on an 8x8 encrypted input with a 3x3 filter (36 windows): the RLC circuit
// against the per-window baseline, both synthesized, proven and verified.
struct ReductionDemo {
  int windows = 0;
  std::uint64_t vpin_mults = 0, vpin_adds = 0, vpin_constraints = 0;
  std::uint64_t base_mults = 0, base_adds = 0, base_constraints = 0;
  bool vpin_verified = false, base_verified = false;
  double vpin_prove_s = 0, base_prove_s = 0;
  double ratio() const { return double(vpin_constraints) / double(base_constraints); }
};
ReductionDemo reduction_demo(Rng& rng, int n = 8, int k = 3);

// Tabular and JSON renderings for the CLI.
struct CountReport {
  std::string network, dataset;
  Profile circuit, reference, baseline;
};
CountReport count_network(const std::string& network, const std::string& dataset);
std::string to_json(const CountReport& r);
std::string to_table(const CountReport& r);

}  // namespace vpin::acct
