#pragma once

// Round-driven orchestration of the optimised protocol and the LEACH /
// LEACH-EEE baselines, with per-hop energy accounting and round metrics.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "optleach/aco.hpp"
#include "optleach/clustering.hpp"
#include "optleach/core.hpp"
#include "optleach/intra_cluster.hpp"

namespace optleach {

enum class Protocol { Leach, LeachEee, Optimized };

const char* to_string(Protocol p) noexcept;
Protocol protocol_from_string(const std::string& name);

struct MonitorParams {
  bool enabled = false;
  Margin margin{-1.5, 1.5};
  double reading_mean = 0.0;
  double reading_std = 1.0;
};

struct LeachParams {
  double p = 0.0;  // CH probability; 0 means ch_count / node_count
  double super_fraction = 0.2;  // LEACH-EEE: share of CHs promoted to super-CH
};

struct ScenarioConfig {
  int node_count = 200;
  int ch_count = 20;
  FieldDims field_dims;
  Vec2 sink{100.0, 250.0};
  std::uint64_t seed = 1;
  int rounds_max = 20000;
  Protocol protocol = Protocol::Optimized;

  double initial_energy = 1.0;
  double death_threshold = 0.0;
  double comm_range = 40.0;  // node-to-node radio range (m)

  EnergyModel energy;
  int control_bits = 200;
  double aggregation_energy = 5e-9;  // J/bit per fused packet

  RssiModel rssi;
  ChElectionParams election{0.0, 0, 0.8};  // p = 0 means ch_count / node_count
  VoronoiParams voronoi;
  AcoParams aco;
  double inter_cluster_range = 0.0;  // 0: twice the largest cluster extent
  LinkCostParams cost;
  double lqi_noise = 0.0;
  MonitorParams monitor;
  int rounds_per_campaign = 20;
  LeachParams leach;

  void validate() const;
};

enum class EnergyKind { TxData, RxData, TxControl, RxControl, Aggregate };

const char* to_string(EnergyKind kind) noexcept;

struct EnergyEvent {
  int node = 0;
  EnergyKind kind = EnergyKind::TxData;
  double bits = 0.0;
  double distance = 0.0;
  double requested = 0.0;  // joules asked for by the radio model
  double applied = 0.0;    // joules actually removed (clamped at zero)
  bool noop = false;       // node was already dead
};

struct RoundMetrics {
  int round = 0;
  std::uint64_t packets_delivered = 0;  // cumulative, at the sink
  int dead_nodes = 0;
  double total_energy = 0.0;
};

struct MonitorStats {
  std::uint64_t reactive = 0;
  std::uint64_t proactive = 0;
  // Reactive readings reach the sink in the round they occur; proactive ones
  // wait one round for batch inference.
  double mean_latency_rounds() const;
};

struct SimState {
  ScenarioConfig cfg;
  Network net;
  Rng rng{0};
  std::vector<double> est_dist;
  int round = 0;
  std::uint64_t packets_delivered = 0;
  int first_dead_round = -1;

  // optimised protocol
  ClusterLayout layout;
  double alpha = 0.0;
  ChElectionParams election;
  ChGraph ch_graph;
  RoutingTree tree;
  std::vector<double> last_aco_trace;
  int campaigns = 0;
  std::vector<Branch> selected_branch;  // per cluster, refreshed every round

  // LEACH family
  std::vector<int> last_ch_round;

  std::vector<EnergyEvent> ledger;  // events of the latest round
  std::vector<std::string> log;
  MonitorStats monitor;
};

// Places nodes, estimates sink distances and forms the start-up clusters.
// Throws SetupError when the node graph is disconnected at comm_range.
SimState init_scenario(const ScenarioConfig& cfg);

bool is_network_dead(const SimState& state);

// One round of the configured protocol. Throws DomainError when no node is alive.
RoundMetrics run_round(SimState& state);
RoundMetrics run_optimized_round(SimState& state);
RoundMetrics baseline_leach_round(SimState& state);
RoundMetrics baseline_leach_eee_round(SimState& state);

struct RunSummary {
  std::optional<int> first_dead_round;
  std::optional<int> death_round;
  std::uint64_t total_packets = 0;
  int rounds_run = 0;
  std::uint64_t seed = 0;
  Protocol protocol = Protocol::Optimized;
  double final_energy = 0.0;
  MonitorStats monitor;
};

struct RunResult {
  std::vector<RoundMetrics> series;
  RunSummary summary;
};

RunResult run_simulation(const ScenarioConfig& cfg);

// Rebuilds the CH graph from the current layout and reruns the ant colony.
void route_inter_cluster(SimState& state);

}  // namespace optleach
