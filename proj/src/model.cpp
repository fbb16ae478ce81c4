#include "vpin/model.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "vpin/ahe.hpp"

namespace vpin {

using nlohmann::json;

namespace {

template <class T>
std::vector<T> decode_le(const std::string& b64, std::size_t expect, const char* what) {
  auto bytes = base64_decode(b64);
  if (!bytes) throw ModelError(std::string("bad base64 in ") + what);
  if (bytes->size() != expect * sizeof(T)) {
    throw ModelError(std::string(what) + ": expected " + std::to_string(expect) + " values, got " +
                     std::to_string(bytes->size() / sizeof(T)));
  }
  std::vector<T> out(expect);
  for (std::size_t i = 0; i < expect; ++i) {
    std::make_unsigned_t<T> u = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) u |= static_cast<std::make_unsigned_t<T>>((*bytes)[i * sizeof(T) + b]) << (8 * b);
    out[i] = static_cast<T>(u);
  }
  return out;
}

template <class T>
std::string encode_le(const std::vector<T>& v) {
  Bytes out;
  out.reserve(v.size() * sizeof(T));
  for (T x : v) {
    auto u = static_cast<std::make_unsigned_t<T>>(x);
    for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<std::uint8_t>(u >> (8 * b)));
  }
  return base64_encode(out);
}

int get_int(const json& j, const char* key, int def, bool required = false) {
  if (!j.contains(key)) {
    if (required) throw ModelError(std::string("missing field ") + key);
    return def;
  }
  if (!j[key].is_number_integer()) throw ModelError(std::string("field ") + key + " must be an integer");
  return j[key].get<int>();
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write " + path);
  out << data;
}

ShapeTrace trace_shapes(const Model& m) {
  ShapeTrace t;
  std::array<int, 3> s{m.in_ch, m.in_h, m.in_w};
  t.shapes.push_back(s);
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const Layer& l = m.layers[li];
    std::string at = "layer " + std::to_string(li) + ": ";
    switch (l.type) {
      case LayerType::conv: {
        const ConvSpec& c = l.conv;
        if (c.in_ch != s[0]) throw ModelError(at + "conv in_ch does not match input channels");
        if (c.k < 1 || c.stride < 1 || c.pad < 0) throw ModelError(at + "bad conv geometry");
        int hh = s[1] + 2 * c.pad - c.k, ww = s[2] + 2 * c.pad - c.k;
        if (hh < 0 || ww < 0 || hh % c.stride || ww % c.stride) throw ModelError(at + "conv window does not tile the input");
        if (c.w.size() != std::size_t(c.out_ch) * c.in_ch * c.k * c.k) throw ModelError(at + "conv weight count");
        if (!c.bias.empty() && c.bias.size() != std::size_t(c.out_ch)) throw ModelError(at + "conv bias count");
        s = {c.out_ch, hh / c.stride + 1, ww / c.stride + 1};
        break;
      }
      case LayerType::avgpool:
        if (l.pool.k < 1 || s[1] % l.pool.k || s[2] % l.pool.k) throw ModelError(at + "pool window does not tile the input");
        s = {s[0], s[1] / l.pool.k, s[2] / l.pool.k};
        break;
      case LayerType::fc: {
        const FcSpec& f = l.fc;
        if (f.g != s[0] * s[1] * s[2]) throw ModelError(at + "fc input width does not match flattened input");
        if (f.w.size() != std::size_t(f.g) * f.h || f.b.size() != std::size_t(f.h)) throw ModelError(at + "fc parameter count");
        s = {f.h, 1, 1};
        break;
      }
    }
    t.shapes.push_back(s);
  }
  return t;
}

Model model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ModelError(std::string("model json: ") + e.what());
  }
  try {
    Model m;
    m.f = get_int(j, "f", 16);
    m.zeta = get_int(j, "zeta", m.f);
    if (j.contains("meta")) {
      const auto& meta = j["meta"];
      m.name = meta.value("name", "");
      m.dataset = meta.value("dataset", "");
      if (meta.contains("input")) {
        auto in = meta["input"].get<std::vector<int>>();
        if (in.size() != 3) throw ModelError("meta.input must be [c, h, w]");
        m.in_ch = in[0];
        m.in_h = in[1];
        m.in_w = in[2];
      }
    }
    if (!j.contains("layers") || !j["layers"].is_array()) throw ModelError("missing layers");
    for (const auto& lj : j["layers"]) {
      Layer l;
      std::string type = lj.at("type").get<std::string>();
      if (type == "conv") {
        l.type = LayerType::conv;
        auto& c = l.conv;
        c.k = get_int(lj, "k", 3, true);
        c.stride = get_int(lj, "stride", 1);
        c.pad = get_int(lj, "pad", 0);
        c.in_ch = get_int(lj, "in_ch", 1);
        c.out_ch = get_int(lj, "out_ch", 1);
        c.w = decode_le<std::int32_t>(lj.at("data_b64").get<std::string>(), std::size_t(c.out_ch) * c.in_ch * c.k * c.k,
                                      "conv data_b64");
        if (lj.contains("bias_b64")) c.bias = decode_le<std::int64_t>(lj["bias_b64"].get<std::string>(), c.out_ch, "conv bias_b64");
      } else if (type == "avgpool") {
        l.type = LayerType::avgpool;
        l.pool.k = get_int(lj, "k", 2, true);
      } else if (type == "fc") {
        l.type = LayerType::fc;
        auto& f = l.fc;
        f.g = get_int(lj, "g", 0, true);
        f.h = get_int(lj, "h", 0, true);
        f.w = decode_le<std::int32_t>(lj.at("w_b64").get<std::string>(), std::size_t(f.g) * f.h, "fc w_b64");
        f.b = lj.contains("b_b64") ? decode_le<std::int64_t>(lj["b_b64"].get<std::string>(), f.h, "fc b_b64")
                                   : std::vector<std::int64_t>(f.h, 0);
      } else {
        throw ModelError("unknown layer type " + type);
      }
      m.layers.push_back(std::move(l));
    }
    trace_shapes(m);
    return m;
  } catch (const json::exception& e) {
    throw ModelError(std::string("model json: ") + e.what());
  }
}

std::string model_to_json(const Model& m) {
  json layers = json::array();
  for (const auto& l : m.layers) {
    switch (l.type) {
      case LayerType::conv: {
        json c = {{"type", "conv"},        {"k", l.conv.k},          {"stride", l.conv.stride},
                  {"pad", l.conv.pad},     {"in_ch", l.conv.in_ch},  {"out_ch", l.conv.out_ch},
                  {"data_b64", encode_le(l.conv.w)}};
        if (!l.conv.bias.empty()) c["bias_b64"] = encode_le(l.conv.bias);
        layers.push_back(c);
        break;
      }
      case LayerType::avgpool:
        layers.push_back({{"type", "avgpool"}, {"k", l.pool.k}});
        break;
      case LayerType::fc:
        layers.push_back({{"type", "fc"}, {"g", l.fc.g}, {"h", l.fc.h}, {"w_b64", encode_le(l.fc.w)}, {"b_b64", encode_le(l.fc.b)}});
        break;
    }
  }
  json j = {{"f", m.f},
            {"zeta", m.zeta},
            {"layers", layers},
            {"meta", {{"name", m.name}, {"dataset", m.dataset}, {"input", {m.in_ch, m.in_h, m.in_w}}}}};
  return j.dump();
}

Model load_model(const std::string& path) { return model_from_json(read_file(path)); }
void save_model(const Model& m, const std::string& path) { write_file(path, model_to_json(m)); }

Sample sample_from_json(const std::string& text) {
  try {
    json j = json::parse(text);
    Sample s;
    auto shape = j.at("shape").get<std::vector<int>>();
    if (shape.size() != 2 && shape.size() != 3) throw ModelError("sample shape must be [h, w] or [h, w, c]");
    int h = shape[0], w = shape[1], c = shape.size() == 3 ? shape[2] : 1;
    if (h <= 0 || w <= 0 || c <= 0) throw ModelError("bad sample shape");
    s.f = get_int(j, "f", 16);
    auto raw = decode_le<std::int32_t>(j.at("data_b64").get<std::string>(), std::size_t(h) * w * c, "sample data_b64");
    s.x = ITensor(c, h, w);
    // stored row-major over [h, w, c]
    for (int i = 0; i < h; ++i) {
      for (int jj = 0; jj < w; ++jj) {
        for (int ch = 0; ch < c; ++ch) s.x.at(ch, i, jj) = raw[(std::size_t(i) * w + jj) * c + ch];
      }
    }
    s.label = get_int(j, "label", -1);
    s.prediction = get_int(j, "prediction", -1);
    if (j.contains("logits_b64")) {
      auto b = base64_decode(j["logits_b64"].get<std::string>());
      if (!b || b->size() % 8) throw ModelError("bad logits_b64");
      s.logits = decode_le<std::int64_t>(j["logits_b64"].get<std::string>(), b->size() / 8, "logits_b64");
    }
    return s;
  } catch (const json::exception& e) {
    throw ModelError(std::string("sample json: ") + e.what());
  }
}

std::string sample_to_json(const Sample& s) {
  std::vector<std::int32_t> raw(s.x.size());
  for (int i = 0; i < s.x.h; ++i) {
    for (int jj = 0; jj < s.x.w; ++jj) {
      for (int ch = 0; ch < s.x.c; ++ch) raw[(std::size_t(i) * s.x.w + jj) * s.x.c + ch] = static_cast<std::int32_t>(s.x.at(ch, i, jj));
    }
  }
  json shape = s.x.c == 1 ? json{s.x.h, s.x.w} : json{s.x.h, s.x.w, s.x.c};
  json j = {{"shape", shape}, {"f", s.f}, {"data_b64", encode_le(raw)}};
  if (s.label >= 0) j["label"] = s.label;
  if (s.prediction >= 0) j["prediction"] = s.prediction;
  if (!s.logits.empty()) j["logits_b64"] = encode_le(s.logits);
  return j.dump();
}

Sample load_sample(const std::string& path) { return sample_from_json(read_file(path)); }

ModelLayout model_layout(const Model& m) {
  ModelLayout L;
  L.conv_w.assign(m.layers.size(), 0);
  L.fc_w.assign(m.layers.size(), 0);
  L.bias.assign(m.layers.size(), 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    if (m.layers[i].type == LayerType::conv) {
      L.conv_w[i] = off;
      off += m.layers[i].conv.w.size();
    }
  }
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    if (m.layers[i].type == LayerType::fc) {
      L.fc_w[i] = off;
      off += m.layers[i].fc.w.size();
    }
  }
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    L.bias[i] = off;
    if (m.layers[i].type == LayerType::conv) off += m.layers[i].conv.bias.size();
    if (m.layers[i].type == LayerType::fc) off += m.layers[i].fc.b.size();
  }
  L.total = off;
  return L;
}

std::vector<std::int64_t> model_vector(const Model& m) {
  ModelLayout L = model_layout(m);
  std::vector<std::int64_t> v(L.total);
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const Layer& l = m.layers[i];
    if (l.type == LayerType::conv) {
      std::copy(l.conv.w.begin(), l.conv.w.end(), v.begin() + L.conv_w[i]);
      std::copy(l.conv.bias.begin(), l.conv.bias.end(), v.begin() + L.bias[i]);
    } else if (l.type == LayerType::fc) {
      std::copy(l.fc.w.begin(), l.fc.w.end(), v.begin() + L.fc_w[i]);
      std::copy(l.fc.b.begin(), l.fc.b.end(), v.begin() + L.bias[i]);
    }
  }
  return v;
}

std::size_t num_parameters(const Model& m) { return model_layout(m).total; }

bool known_network(const std::string& name) {
  for (const char* n : {"A", "B", "C", "D", "E", "lenet", "toy"}) {
    if (name == n) return true;
  }
  return false;
}

Model make_network(const std::string& name, Rng& rng, int f, int in_ch) {
  if (!known_network(name)) throw ModelError("unknown network " + name);
  Model m;
  m.name = name;
  m.dataset = in_ch == 3 ? "cifar10" : "mnist";
  m.f = f;
  m.zeta = f;
  m.in_ch = in_ch;
  auto weights = [&](std::size_t n, int fan_in) {
    std::int64_t mag = std::max<std::int64_t>(1, (std::int64_t{1} << f) / fan_in);
    std::vector<std::int32_t> w(n);
    for (auto& x : w) x = static_cast<std::int32_t>(static_cast<std::int64_t>(rng.uniform(2 * mag + 1)) - mag);
    return w;
  };
  auto conv = [&](int k, int pad, int ci, int co) {
    Layer l;
    l.type = LayerType::conv;
    l.conv = ConvSpec{k, 1, pad, ci, co, weights(std::size_t(co) * ci * k * k, ci * k * k), {}};
    if (name == "lenet") l.conv.bias.assign(co, 0);
    return l;
  };
  auto pool = [](int k) {
    Layer l;
    l.type = LayerType::avgpool;
    l.pool.k = k;
    return l;
  };
  auto fc = [&](int g, int h) {
    Layer l;
    l.type = LayerType::fc;
    l.fc = FcSpec{g, h, weights(std::size_t(g) * h, g), std::vector<std::int64_t>(h, 0)};
    return l;
  };
  auto biases = [&](std::size_t n) {
    std::int64_t mag = std::int64_t{1} << (2 * f - 2);
    std::vector<std::int64_t> b(n);
    for (auto& x : b) x = static_cast<std::int64_t>(rng.uniform(2 * mag + 1)) - mag;
    return b;
  };
  if (name == "toy") {
    m.in_h = m.in_w = 8;
    m.layers = {conv(3, 1, in_ch, 2), pool(2), fc(32, 8), fc(8, 4)};
    m.layers[0].conv.bias = biases(2);
    m.layers[2].fc.b = biases(8);
    m.layers[3].fc.b = biases(4);
  } else if (name == "lenet") {
    m.layers = {conv(5, 0, in_ch, 6), pool(2), conv(5, 0, 6, 16), pool(2), conv(5, 0, 16, 120), fc(120, 84), fc(84, 10)};
  } else {
    int pk = (name == "A" || name == "B") ? 4 : 2;
    int g = (32 / pk) * (32 / pk);
    int h = name == "A" || name == "C" ? 16 : name == "B" || name == "D" ? 32 : 64;
    m.layers = {conv(3, 1, in_ch, 1), pool(pk), fc(g, h), fc(h, 10)};
  }
  trace_shapes(m);
  return m;
}

std::int64_t pool_constant(int k, int f) { return fp_encode(1.0 / (double(k) * k), f); }

std::int64_t trelu_value(std::int64_t v, int zeta) { return v <= 0 ? 0 : truncate(v, zeta); }

int RefTrace::argmax() const {
  int best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = static_cast<int>(i);
  }
  return best;
}

RefTrace ref_infer(const Model& m, const ITensor& x, int bound_bits) {
  trace_shapes(m);
  if (x.c != m.in_ch || x.h != m.in_h || x.w != m.in_w) throw ModelError("sample shape does not match model input");
  const __int128 bound = static_cast<__int128>(1) << bound_bits;
  RefTrace t;
  ITensor cur = x;
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const Layer& l = m.layers[li];
    auto check = [&](__int128 v) {
      if (v >= bound || v <= -bound) {
        throw OverflowError(li, "layer " + std::to_string(li) + " value exceeds 2^" + std::to_string(bound_bits));
      }
      return static_cast<std::int64_t>(v);
    };
    ITensor out;
    if (l.type == LayerType::conv) {
      const ConvSpec& c = l.conv;
      int oh = (cur.h + 2 * c.pad - c.k) / c.stride + 1, ow = (cur.w + 2 * c.pad - c.k) / c.stride + 1;
      out = ITensor(c.out_ch, oh, ow);
      for (int o = 0; o < c.out_ch; ++o) {
        for (int i = 0; i < oh; ++i) {
          for (int j = 0; j < ow; ++j) {
            __int128 acc = c.bias.empty() ? 0 : c.bias[o];
            for (int ci = 0; ci < c.in_ch; ++ci) {
              for (int a = 0; a < c.k; ++a) {
                for (int b = 0; b < c.k; ++b) {
                  int yi = i * c.stride + a - c.pad, xj = j * c.stride + b - c.pad;
                  if (yi < 0 || xj < 0 || yi >= cur.h || xj >= cur.w) continue;
                  acc += static_cast<__int128>(c.weight(o, ci, a, b)) * cur.at(ci, yi, xj);
                }
              }
            }
            out.at(o, i, j) = check(acc);
          }
        }
      }
    } else if (l.type == LayerType::avgpool) {
      int k = l.pool.k;
      std::int64_t kp = pool_constant(k, m.f);
      out = ITensor(cur.c, cur.h / k, cur.w / k);
      for (int ch = 0; ch < out.c; ++ch) {
        for (int i = 0; i < out.h; ++i) {
          for (int j = 0; j < out.w; ++j) {
            __int128 s = 0;
            for (int a = 0; a < k; ++a) {
              for (int b = 0; b < k; ++b) s += cur.at(ch, i * k + a, j * k + b);
            }
            out.at(ch, i, j) = check(s * kp);
          }
        }
      }
    } else {
      const FcSpec& f = l.fc;
      out = ITensor(f.h, 1, 1);
      for (int i = 0; i < f.h; ++i) {
        __int128 acc = f.b[i];
        for (int j = 0; j < f.g; ++j) acc += static_cast<__int128>(f.weight(i, j)) * cur.data[j];
        out.data[i] = check(acc);
      }
    }
    t.layer_out.push_back(out);
    if (li + 1 == m.layers.size()) {
      t.logits = out.data;
    } else {
      ITensor act = out;
      for (auto& v : act.data) v = trelu_value(v, m.zeta);
      t.act_out.push_back(act);
      cur = std::move(act);
    }
  }
  return t;
}

}  // namespace vpin
