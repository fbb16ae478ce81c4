#include "doctest.h"
#include "json.hpp"
#include "vpin/accounting.hpp"

using namespace vpin;
using namespace vpin::acct;

namespace {

struct Expect {
  const char* net;
  std::uint64_t pool_adds, fc1_mults, fc1_adds, fc2_mults, fc2_adds;
};

}  // namespace

TEST_CASE("lenet reference accounting") {
  auto r = count_network("lenet", "mnist");
  CHECK(r.reference.mults() == 7508);
  CHECK(r.reference.adds() == 16864);
  CHECK(r.reference.mults() * 3464 == 26007712);
  CHECK(r.reference.adds() * 10 == 168640);
  CHECK(constraints(r.reference.mults(), r.reference.adds()) == 26176352);
  auto j = nlohmann::json::parse(to_json(r));
  CHECK(j["reference"]["constraints"] == 26176352);
  CHECK(j["reference"]["constraints_mults"] == 26007712);
  CHECK(j["reference"]["constraints_adds"] == 168640);
  CHECK(to_table(r).find("26176352") != std::string::npos);

  auto c = count_network("lenet", "cifar10");
  CHECK(c.reference.mults() == 8108);
  CHECK(c.reference.adds() == 36256);

  // the session circuit aggregates across channels, so LeNet needs far fewer ops
  CHECK(r.circuit.mults() == 2 * (25 + 150 + 400 + 120 + 84));
  CHECK(r.circuit.mults() < r.reference.mults());
  CHECK_THROWS_AS(count_network("F", "mnist"), ModelError);
  CHECK_THROWS_AS(count_network("A", "svhn"), ModelError);
}

TEST_CASE("closed forms for networks A-E") {
  // hand-derived: pool (k^2-1) x cells, FC g and g-1+h, conv 9 and 8
  const Expect ex[] = {{"A", 15 * 64, 64, 63 + 16, 16, 15 + 10},
                       {"B", 15 * 64, 64, 63 + 32, 32, 31 + 10},
                       {"C", 3 * 256, 256, 255 + 16, 16, 15 + 10},
                       {"D", 3 * 256, 256, 255 + 32, 32, 31 + 10},
                       {"E", 3 * 256, 256, 255 + 64, 64, 63 + 10}};
  for (const auto& e : ex) {
    INFO(e.net);
    auto r = count_network(e.net, "mnist");
    for (const Profile* p : {&r.circuit, &r.reference}) {
      REQUIRE(p->layers.size() == 4);
      CHECK(p->layers[0].mults == 2 * 9);
      CHECK(p->layers[0].adds == 2 * 8);
      CHECK(p->layers[1].mults == 0);
      CHECK(p->layers[1].adds == 2 * e.pool_adds);
      CHECK(p->layers[2].mults == 2 * e.fc1_mults);
      CHECK(p->layers[2].adds == 2 * e.fc1_adds);
      CHECK(p->layers[3].mults == 2 * e.fc2_mults);
      CHECK(p->layers[3].adds == 2 * e.fc2_adds);
    }
    // without RLC: one statement per conv window and per FC row
    CHECK(r.baseline.layers[0].mults == 2 * 9 * 1024);
    CHECK(r.baseline.layers[2].mults == 2 * e.fc1_mults * (e.fc1_adds - e.fc1_mults + 1));
  }
}

TEST_CASE("measured session counts equal the closed forms") {
  Rng r(4);
  Model m = make_network("toy", r, 10);
  Sample s;
  s.f = m.f;
  s.x = ITensor(1, 8, 8);
  for (auto& v : s.x.data) v = static_cast<std::int64_t>(r.uniform(1 << 10));
  proto::ClientConfig cc;
  cc.seeded = true;
  cc.seed = 1;
  cc.table = std::make_shared<const BsgsTable>(e2_default(), 20);
  proto::ServerConfig sc;
  sc.seeded = true;
  auto run = proto::run_local(m, s, cc, sc);
  REQUIRE(run.client.outcome == proto::Outcome::accepted);
  auto sts = proto::build_statements(m, run.server.record, run.server.seed);
  rlc::SessionCircuit circ(sts);
  std::vector<cps::Fq> mv;
  for (auto w : model_vector(m)) mv.push_back(cps::fq_of(w));
  std::vector<cps::Opening> open{cps::Opening{mv, u256(1)}};
  auto measured = measure(circ, open);
  auto closed = circuit_profile(m);
  REQUIRE(measured.layers.size() == closed.layers.size());
  for (std::size_t i = 0; i < closed.layers.size(); ++i) {
    CHECK(measured.layers[i].mults == closed.layers[i].mults);
    CHECK(measured.layers[i].adds == closed.layers[i].adds);
  }
  CHECK(run.server.circuit.stats.n_point_mults == closed.mults());

  // the baseline circuit on the same session: real rows, counts match its closed form
  BaselineCircuit bc(baseline_statements(m, run.server.record));
  auto syn = cps::synthesize_all(bc, open);
  CHECK(syn.satisfied);
  auto base = baseline_profile(m);
  CHECK(syn.stats.n_point_mults == base.mults());
  CHECK(syn.stats.n_point_adds == base.adds());
}

TEST_CASE("desk-scale reduction demo") {
  Rng r(9);
  auto d = reduction_demo(r);
  CHECK(d.windows == 36);
  CHECK(d.vpin_verified);
  CHECK(d.base_verified);
  CHECK(d.vpin_mults == 2 * 9);
  CHECK(d.base_mults == 2 * 9 * 36);
  CHECK(d.vpin_constraints == 2 * 31256);
  CHECK(d.base_constraints == 36 * 2 * 31256);
  CHECK(d.ratio() <= (1.0 / 36) * 1.05);
}
