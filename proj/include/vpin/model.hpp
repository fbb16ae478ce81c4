#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vpin/util.hpp"

namespace vpin {

// Channel-major 3D tensor (c, h, w).
template <class T>
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int c_, int h_, int w_, const T& fill = T{}) : c(c_), h(h_), w(w_), data(std::size_t(c_) * h_ * w_, fill) {}
  std::size_t size() const { return data.size(); }
  std::size_t index(int ch, int i, int j) const { return (std::size_t(ch) * h + i) * w + j; }
  T& at(int ch, int i, int j) { return data[index(ch, i, j)]; }
  const T& at(int ch, int i, int j) const { return data[index(ch, i, j)]; }
};

using ITensor = Tensor<std::int64_t>;

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a value that the client must decrypt leaves the decryptable range.
class OverflowError : public std::runtime_error {
 public:
  OverflowError(std::size_t layer_, const std::string& what) : std::runtime_error(what), layer(layer_) {}
  std::size_t layer;
};

enum class LayerType { conv, avgpool, fc };

// Weights are fixed point at scale f, biases at scale 2f (they add to products of two f-scaled values).
struct ConvSpec {
  int k = 3, stride = 1, pad = 0, in_ch = 1, out_ch = 1;
  std::vector<std::int32_t> w;     // [out][in][k][k]
  std::vector<std::int64_t> bias;  // empty or out_ch entries
  std::int32_t weight(int o, int c, int a, int b) const { return w[((std::size_t(o) * in_ch + c) * k + a) * k + b]; }
};

struct PoolSpec {
  int k = 2;
};

struct FcSpec {
  int g = 0, h = 0;
  std::vector<std::int32_t> w;  // [h][g], output-major
  std::vector<std::int64_t> b;  // h entries
  std::int32_t weight(int i, int j) const { return w[std::size_t(i) * g + j]; }
};

struct Layer {
  LayerType type = LayerType::conv;
  ConvSpec conv;
  PoolSpec pool;
  FcSpec fc;
};

struct Model {
  std::string name, dataset;
  int f = 16;
  int zeta = 16;
  int in_ch = 1, in_h = 32, in_w = 32;
  std::vector<Layer> layers;
};

struct Sample {
  ITensor x;  // fixed point at scale f
  int f = 16;
  int label = -1;
  int prediction = -1;               // recorded by the exporter, -1 when absent
  std::vector<std::int64_t> logits;  // recorded by the exporter, empty when absent
};

// Output shape of every layer, starting with the input.
struct ShapeTrace {
  std::vector<std::array<int, 3>> shapes;  // (c, h, w); FC outputs are (h, 1, 1)
};
ShapeTrace trace_shapes(const Model& m);  // throws ModelError on inconsistent shapes

Model model_from_json(const std::string& text);  // throws ModelError
std::string model_to_json(const Model& m);
Model load_model(const std::string& path);
void save_model(const Model& m, const std::string& path);

Sample sample_from_json(const std::string& text);
std::string sample_to_json(const Sample& s);
Sample load_sample(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& data);

// Committed model vector: all conv filters, then all FC weights, then all biases, each in layer order.
struct ModelLayout {
  std::vector<std::size_t> conv_w, fc_w, bias;  // offset per layer (only meaningful for matching types)
  std::size_t total = 0;
};
ModelLayout model_layout(const Model& m);
std::vector<std::int64_t> model_vector(const Model& m);
std::size_t num_parameters(const Model& m);

// Architectures A-E (single 3x3 conv with pad 1, avg pool, two FC layers) and LeNet-5.
// Weights are drawn uniformly from [-2^f / fan_in, 2^f / fan_in] so the shapes can be exercised
// without a trained fixture; biases are zero. "toy" is an 8x8 network (conv 3x3 pad 1 to two
// channels with bias, pool 2, FC 32->8->4 with biases) small enough for many-trial property runs.
Model make_network(const std::string& name, Rng& rng, int f = 16, int in_ch = 1);
bool known_network(const std::string& name);

// Plaintext fixed-point pipeline. Every layer except the last is followed by a client round
// (ReLU, then truncation by zeta). Values the client decrypts must stay below 2^bound_bits.
struct RefTrace {
  std::vector<ITensor> layer_out;  // server-side output of each layer (what the client decrypts)
  std::vector<ITensor> act_out;    // after the client round (empty for the last layer)
  std::vector<std::int64_t> logits;
  int argmax() const;
};
RefTrace ref_infer(const Model& m, const ITensor& x, int bound_bits = 35);

// Public pooling constant k' = fp_encode(1 / k^2, f).
std::int64_t pool_constant(int k, int f);
std::int64_t trelu_value(std::int64_t v, int zeta);

}  // namespace vpin
