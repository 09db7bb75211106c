#include <cmath>

#include "doctest.h"
#include "optleach/simulation.hpp"
#include "support.hpp"

using namespace optleach;
using testing::radio_tx;

TEST_CASE("init_scenario") {
  SUBCASE("a single node heads its own cluster") {
    ScenarioConfig cfg = testing::small_scenario(Protocol::Optimized, 1, 1, 1);
    const SimState s = init_scenario(cfg);
    REQUIRE(s.layout.heads.size() == 1);
    CHECK(s.layout.heads[0] == 0);
    CHECK(s.net.nodes[0].role == Role::ClusterHead);
  }
  SUBCASE("placement is reproducible") {
    const SimState a = init_scenario(ScenarioConfig{});
    const SimState b = init_scenario(ScenarioConfig{});
    for (int i = 0; i < 200; ++i) CHECK(a.net.nodes[i].position == b.net.nodes[i].position);
  }
  SUBCASE("200 nodes in 20 clusters") {
    const SimState s = init_scenario(ScenarioConfig{});
    CHECK(s.layout.cluster_count() == 20);
    CHECK(std::count_if(s.layout.assignment.begin(), s.layout.assignment.end(),
                        [](int c) { return c >= 0; }) == 200);
    CHECK(s.tree.next_hop.size() == 21);
  }
  SUBCASE("a disconnected field is a setup error") {
    ScenarioConfig cfg;
    cfg.node_count = 30;
    cfg.ch_count = 3;
    cfg.field_dims = {2000, 2000};
    cfg.sink = {1000, 2100};
    CHECK_THROWS_AS(init_scenario(cfg), SetupError);
  }
  SUBCASE("invalid configs are config errors") {
    ScenarioConfig cfg;
    cfg.ch_count = 300;
    CHECK_THROWS_AS(init_scenario(cfg), ConfigError);
    cfg = ScenarioConfig{};
    cfg.sink = {100, 100};
    CHECK_THROWS_AS(init_scenario(cfg), ConfigError);
  }
}

TEST_CASE("is_network_dead") {
  SimState s = init_scenario(ScenarioConfig{});
  CHECK_FALSE(is_network_dead(s));
  for (int i = 0; i < 99; ++i) s.net.nodes[i].alive = false;
  CHECK_FALSE(is_network_dead(s));
  s.net.nodes[99].alive = false;
  CHECK(is_network_dead(s));
}

TEST_CASE("run_simulation") {
  SUBCASE("zero rounds") {
    ScenarioConfig cfg;
    cfg.rounds_max = 0;
    const RunResult r = run_simulation(cfg);
    CHECK(r.series.empty());
    CHECK(r.summary.rounds_run == 0);
    CHECK(r.summary.total_packets == 0);
    CHECK_FALSE(r.summary.first_dead_round.has_value());
    CHECK(r.summary.final_energy == doctest::Approx(200.0));
  }
  SUBCASE("repeat runs agree") {
    for (Protocol p : {Protocol::Leach, Protocol::LeachEee, Protocol::Optimized}) {
      ScenarioConfig cfg;
      cfg.protocol = p;
      cfg.rounds_max = 60;
      CHECK(testing::metrics_csv(run_simulation(cfg).series) ==
            testing::metrics_csv(run_simulation(cfg).series));
    }
  }
  SUBCASE("runs stop at network death") {
    ScenarioConfig cfg = testing::small_scenario(Protocol::Leach, 4, 20, 2);
    cfg.initial_energy = 0.05;
    const RunResult r = run_simulation(cfg);
    REQUIRE(r.summary.death_round.has_value());
    CHECK(r.series.back().dead_nodes >= 10);
    CHECK(r.series[r.series.size() - 2].dead_nodes < 10);
    CHECK(*r.summary.first_dead_round <= *r.summary.death_round);
  }
}

TEST_CASE("smallest pipeline delivers one reading per round") {
  ScenarioConfig cfg = testing::small_scenario(Protocol::Optimized, 2, 2, 1);
  cfg.initial_energy = 0.01;
  SimState s = init_scenario(cfg);
  std::uint64_t last = 0;
  int rounds = 0;
  while (s.net.dead_count() == 0 && rounds < 10000) {
    const RoundMetrics m = run_round(s);
    ++rounds;
    if (m.dead_nodes == 0) CHECK(m.packets_delivered == last + 1);
    last = m.packets_delivered;
  }
  CHECK(rounds > 1);
  CHECK(rounds < 10000);
}

TEST_CASE("run_round rejects an all-dead network") {
  SimState s = init_scenario(testing::small_scenario(Protocol::Leach, 1, 3, 1));
  for (auto& n : s.net.nodes) n.alive = false;
  CHECK_THROWS_AS(run_round(s), DomainError);
}

TEST_CASE("LEACH with election probability one") {
  ScenarioConfig cfg = testing::small_scenario(Protocol::Leach, 3, 3, 1);
  cfg.leach.p = 1.0;
  SimState s = init_scenario(cfg);
  const double before = s.net.total_energy();
  const RoundMetrics m = run_round(s);

  // every node is a head and sends straight to the sink
  double expected = 0.0;
  for (const auto& n : s.net.nodes) {
    CHECK(n.role == Role::ClusterHead);
    double reach = 0.0;
    for (const auto& o : s.net.nodes) reach = std::max(reach, euclidean_distance(n.position, o.position));
    expected += radio_tx(cfg.control_bits, reach) + radio_tx(cfg.control_bits, 0.0) + 4000 * 5e-9 +
                radio_tx(4000, euclidean_distance(n.position, cfg.sink));
  }
  CHECK(before - m.total_energy == doctest::Approx(expected).epsilon(1e-12));
  int to_sink = 0;
  for (const auto& ev : s.ledger) {
    if (ev.kind == EnergyKind::TxData) {
      CHECK(ev.distance == doctest::Approx(euclidean_distance(s.net.nodes[ev.node].position, cfg.sink)));
      ++to_sink;
    }
  }
  CHECK(to_sink == 3);
  CHECK(m.packets_delivered == 0);  // heads have no members to report
}

TEST_CASE("single-node LEACH round in closed form") {
  ScenarioConfig cfg = testing::small_scenario(Protocol::Leach, 9, 1, 1);
  cfg.leach.p = 1.0;
  SimState s = init_scenario(cfg);
  const double d = euclidean_distance(s.net.nodes[0].position, cfg.sink);
  const RoundMetrics m = run_round(s);
  const double spent = 2 * 200 * 50e-9 + 4000 * 5e-9 + 4000 * (50e-9 + 100e-12 * d * d);
  CHECK(cfg.initial_energy - m.total_energy == doctest::Approx(spent).epsilon(1e-12));
}

TEST_CASE("LEACH-EEE routes heads through super heads") {
  ScenarioConfig cfg;
  cfg.protocol = Protocol::LeachEee;
  SimState s = init_scenario(cfg);
  run_round(s);
  int uplinks = 0;
  for (const auto& ev : s.ledger) {
    if (ev.kind == EnergyKind::TxData &&
        ev.distance == euclidean_distance(s.net.nodes[ev.node].position, cfg.sink)) {
      ++uplinks;
    }
  }
  int heads = 0;
  for (const auto& n : s.net.nodes) heads += n.role == Role::ClusterHead;
  CHECK(uplinks >= 1);
  CHECK(uplinks < heads);
}

TEST_CASE("monitoring counts every alive reading") {
  ScenarioConfig cfg;
  cfg.monitor.enabled = true;
  cfg.rounds_max = 5;
  const RunResult r = run_simulation(cfg);
  CHECK(r.summary.monitor.reactive + r.summary.monitor.proactive == 5 * 200);
  CHECK(r.summary.monitor.reactive > 0);
  // 1.5 sigma margin: about 13% of readings are reactive
  CHECK(std::abs(static_cast<double>(r.summary.monitor.reactive) / 1000.0 - 0.1336) < 0.04);
}

TEST_CASE("protocol names") {
  CHECK(protocol_from_string("leach-eee") == Protocol::LeachEee);
  CHECK(std::string(to_string(Protocol::Optimized)) == "optimized");
  CHECK_THROWS_AS(protocol_from_string("aodv"), ConfigError);
}
