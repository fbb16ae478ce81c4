#include "vpin/curve.hpp"

#include <gmp.h>

#include <stdexcept>

#include "json.hpp"
#include "vpin/util.hpp"

namespace vpin {

const char* to_string(DecodeError e) {
  switch (e) {
    case DecodeError::none: return "ok";
    case DecodeError::invalid_prefix: return "invalid-prefix";
    case DecodeError::x_out_of_range: return "x-out-of-range";
    case DecodeError::not_on_curve: return "not-on-curve";
    case DecodeError::not_in_subgroup: return "not-in-subgroup";
  }
  return "unknown";
}

bool is_probable_prime(const U256& n) {
  mpz_t z;
  mpz_init(z);
  mpz_import(z, 4, -1, sizeof(std::uint64_t), 0, 0, n.data());
  bool r = mpz_probab_prime_p(z, 40) != 0;
  mpz_clear(z);
  return r;
}

namespace {

template <class F>
F coeff_from_b64(const std::string& s) {
  auto bytes = base64_decode(s);
  if (!bytes || bytes->size() > 32) throw std::invalid_argument("bad base64 curve coefficient");
  U256 v = u256_from_be(*bytes);
  if (cmp(v, F::P) >= 0) throw std::invalid_argument("curve coefficient not reduced");
  return F::from_canonical(v);
}

template <class F>
std::string coeff_to_b64(const F& v) {
  std::array<std::uint8_t, 32> b;
  v.to_be(b);
  return base64_encode(b);
}

// Coordinates are parsed against the curve's own field; a generator given over a different
// modulus is rejected here rather than silently reduced.
template <class F>
CurveParams<F> parse(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  CurveParams<F> c;
  c.name = j.at("name").get<std::string>();
  c.a = coeff_from_b64<F>(j.at("a_b64").get<std::string>());
  c.b = coeff_from_b64<F>(j.at("b_b64").get<std::string>());
  c.base_modulus = u256_from_dec(j.at("base_modulus_dec").get<std::string>());
  c.order = u256_from_dec(j.at("order_dec").get<std::string>());
  if (j.contains("cofactor_dec")) c.cofactor = u256_from_dec(j.at("cofactor_dec").get<std::string>());
  c.g = AffinePoint<F>::of(F::from_dec(j.at("gx_dec").get<std::string>()), F::from_dec(j.at("gy_dec").get<std::string>()));
  return c;
}

template <class F>
std::string dump(const CurveParams<F>& c) {
  nlohmann::ordered_json j;
  j["name"] = c.name;
  j["a_b64"] = coeff_to_b64(c.a);
  j["b_b64"] = coeff_to_b64(c.b);
  j["base_modulus_dec"] = u256_to_dec(c.base_modulus);
  j["order_dec"] = u256_to_dec(c.order);
  j["cofactor_dec"] = u256_to_dec(c.cofactor);
  j["gx_dec"] = c.g.x.to_dec();
  j["gy_dec"] = c.g.y.to_dec();
  return j.dump(2) + "\n";
}

}  // namespace

E1Params e1_params_from_json(const std::string& text) { return parse<FeP1>(text); }
E2Params e2_params_from_json(const std::string& text) { return parse<FeQ1>(text); }
std::string params_to_json(const E1Params& c) { return dump(c); }
std::string params_to_json(const E2Params& c) { return dump(c); }

const E1Params& e1_default() {
  static const E1Params p = [] {
    E1Params c;
    c.name = "curve25519-weierstrass";
    c.a = FeP1::from_dec("19298681539552699237261830834781317975544997444273427339909597334573241639236");
    c.b = FeP1::from_dec("55751746669818908907645289078257140818241103727901012315294400837956729358436");
    c.base_modulus = TagP1::modulus;
    c.order = TagQ1::modulus;
    c.cofactor = u256(8);
    c.g = E1Point::of(FeP1::from_dec("19298681539552699237261830834781317975544997444273427339909597334652188435546"),
                      FeP1::from_dec("14781619447589544791020593568409986887264606134616475288964881837755586237401"));
    return c;
  }();
  return p;
}

const E2Params& e2_default() {
  static const E2Params p = [] {
    E2Params c;
    c.name = "e2-embedded";
    c.a = FeQ1::from_dec("3491403595575449084947959021303599933011749826127899762162894550148391771037");
    c.b = FeQ1::from_dec("3633908682298454119909199192149978293706667958442512986315258451820769071958");
    c.base_modulus = TagQ1::modulus;
    c.order = TagQ2::modulus;
    c.cofactor = u256(1);
    c.g = E2Point::of(FeQ1::from_u64(1),
                      FeQ1::from_dec("1257300521734031782892872289891734396540966462563350172755725488676117693996"));
    return c;
  }();
  return p;
}

}  // namespace vpin
