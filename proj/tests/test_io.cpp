#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "optleach/io.hpp"
#include "support.hpp"

using namespace optleach;
using nlohmann::json;

TEST_CASE("config JSON round-trips") {
  ScenarioConfig cfg;
  cfg.node_count = 120;
  cfg.protocol = Protocol::LeachEee;
  cfg.aco.n_iter = 33;
  cfg.monitor.margin = {-2.0, 2.5};
  const std::string text = config_to_json(cfg);
  const ScenarioConfig back = config_from_json(text);
  CHECK(config_to_json(back) == text);
  CHECK(back.node_count == 120);
  CHECK(back.protocol == Protocol::LeachEee);
  CHECK(back.monitor.margin.high == 2.5);
}

TEST_CASE("missing keys keep their defaults") {
  const ScenarioConfig cfg = config_from_json(R"({"seed": 7, "aco": {"n_ants": 3}})");
  CHECK(cfg.seed == 7);
  CHECK(cfg.aco.n_ants == 3);
  CHECK(cfg.aco.n_iter == AcoParams{}.n_iter);
  CHECK(cfg.node_count == 200);
}

TEST_CASE("unknown keys are rejected at every level") {
  CHECK_THROWS_AS(config_from_json(R"({"bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"aco": {"n_antz": 3}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"monitor": {"margin": {"middle": 0}}})"), ConfigError);
}

TEST_CASE("malformed configs are rejected") {
  CHECK_THROWS_AS(config_from_json(R"({"node_count": "many"})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"energy": 5})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"protocol": "aodv"})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"([1, 2])"), ConfigError);
  CHECK_THROWS_AS(config_from_json("{not json"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"ch_count": 500})"), ConfigError);
}

TEST_CASE("config files") {
  const auto path = std::filesystem::temp_directory_path() / "optleach_test_config.json";
  ScenarioConfig cfg;
  cfg.seed = 99;
  save_config(cfg, path.string());
  CHECK(load_config(path.string()).seed == 99);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config("/nonexistent/optleach.json"), ConfigError);
}

TEST_CASE("metrics CSV") {
  const std::vector<RoundMetrics> series{{1, 10, 0, 199.9876543210987}, {2, 20, 1, 199.5}};
  std::ostringstream out;
  write_metrics_csv(out, series);
  const std::string text = out.str();
  CHECK(text.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
  std::istringstream in(text);
  const auto back = read_metrics_csv(in);
  REQUIRE(back.size() == 2);
  CHECK(back[0].total_energy == series[0].total_energy);
  CHECK(back[1].packets_delivered == 20);
  CHECK(back[1].dead_nodes == 1);

  std::istringstream wrong("round,packets\n1,2\n");
  CHECK_THROWS_AS(read_metrics_csv(wrong), Error);
}

TEST_CASE("summary JSON") {
  RunSummary s;
  s.first_dead_round = 12;
  s.total_packets = 345;
  s.seed = 4;
  s.protocol = Protocol::Leach;
  const json j = json::parse(summary_to_json(s));
  CHECK(j["first_dead_round"] == 12);
  CHECK(j["death_round"].is_null());
  CHECK(j["total_packets"] == 345);
  CHECK(j["protocol"] == "leach");
  const RunSummary back = summary_from_json(summary_to_json(s));
  CHECK(back.first_dead_round == 12);
  CHECK_FALSE(back.death_round.has_value());
}

TEST_CASE("audit snapshots") {
  ScenarioConfig cfg;
  SimState s = init_scenario(cfg);
  const json layout = json::parse(layout_to_json(0, s.layout));
  CHECK(layout["heads"].size() == 20);
  CHECK(layout["assignment"].size() == 200);

  const json tree = json::parse(tree_to_json(0, s.ch_graph, s.tree));
  CHECK(tree["next_hop"].size() == 20);
  bool sink_named = false;
  for (const auto& [head, next] : tree["next_hop"].items()) sink_named = sink_named || next == "sink";
  CHECK(sink_named);

  run_round(s);
  const json branches = json::parse(branches_to_json(s.round, s.layout, s.selected_branch));
  CHECK(branches["round"] == 1);
  CHECK(branches["branches"].size() == 20);
  for (const auto& b : branches["branches"]) CHECK(b["nodes"].back() == b["head"]);
}
