#pragma once

// Scenario configs, metric files and audit snapshots.

#include <iosfwd>
#include <string>
#include <vector>

#include "optleach/simulation.hpp"

namespace optleach {

// JSON mirroring ScenarioConfig; missing keys keep their defaults, unknown keys
// and mistyped values raise ConfigError.
ScenarioConfig config_from_json(const std::string& text);
std::string config_to_json(const ScenarioConfig& cfg);
ScenarioConfig load_config(const std::string& path);
void save_config(const ScenarioConfig& cfg, const std::string& path);

inline constexpr const char* kMetricsHeader = "round,packets_delivered,dead_nodes,total_energy";

void write_metrics_csv(std::ostream& out, const std::vector<RoundMetrics>& series);
std::vector<RoundMetrics> read_metrics_csv(std::istream& in);

// {first_dead_round, death_round, total_packets, seed, protocol}; absent rounds are null.
std::string summary_to_json(const RunSummary& summary);
RunSummary summary_from_json(const std::string& text);

// {round, heads[], radii[], assignment{node: cluster}}
std::string layout_to_json(int round, const ClusterLayout& layout);
// {round, next_hop{head: next node}, path_cost{head: joules}}; the sink is named "sink".
std::string tree_to_json(int round, const ChGraph& graph, const RoutingTree& tree);
// {round, branches[{head, nodes[], cost}]}
std::string branches_to_json(int round, const ClusterLayout& layout,
                             const std::vector<Branch>& branches);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace optleach
