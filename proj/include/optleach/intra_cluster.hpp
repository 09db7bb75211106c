#pragma once

// Distributed intra-cluster topology: link cost, least-cost routes toward
// the cluster head, branch selection and the reactive/proactive dispatch.

#include <vector>

#include "optleach/clustering.hpp"
#include "optleach/core.hpp"

namespace optleach {

struct LinkCostParams {
  double mu = 0.5;  // weight of link quality against residual energy

  void validate() const;
};

// C = p * D_c + (1 - p) * (mu * L_qi + (1 - mu) * E_res), p = 1 / n_c.
// All of d_c, l_qi and e_res_norm are expected in [0, 1].
double link_cost(int n_c, double d_c, double l_qi, double e_res_norm, double mu);

// Link quality falls linearly from 1 at zero distance to 0 at `range`.
struct LinkQualityModel {
  double range = 40.0;
  double noise = 0.0;  // std-dev of additive noise, result clamped to [0, 1]

  double quality(double distance, Rng* rng = nullptr) const;
};

// Dense per-cluster graph. Local index 0..n-1; `vertices[k]` is the node id.
// cost[u][v] is the directed cost of u transmitting to v (infinity: no link).
struct ClusterGraph {
  std::vector<int> vertices;
  int head = 0;  // local index of the cluster head
  std::vector<int> n_c;
  std::vector<double> d_c;
  std::vector<double> e_res_norm;
  std::vector<std::vector<double>> l_qi;
  std::vector<std::vector<double>> cost;

  int size() const noexcept { return static_cast<int>(vertices.size()); }
  bool has_edge(int u, int v) const;
};

struct ClusterGraphOptions {
  double comm_range = 40.0;
  LinkCostParams cost;
  LinkQualityModel quality;
  RssiModel rssi;
  // Members with no in-range path to the head are joined through the
  // shortest link into the head's component.
  bool bridge_to_head = false;
};

ClusterGraph build_cluster_graph(const Network& net, const std::vector<int>& members, int head_id,
                                 const ClusterGraphOptions& options, Rng* rng = nullptr);

// Assembles a graph from explicit undirected edges with per-edge costs.
// Used for hand-built topologies and by the bindings.
ClusterGraph make_cluster_graph(int n, int head,
                                const std::vector<std::vector<double>>& directed_costs);

struct RouteTable {
  std::vector<int> next;      // local successor toward the head, -1 for head/unreachable
  std::vector<double> cost;   // accumulated cost to the head, infinity when unreachable
  std::vector<int> path(int from) const;  // local indices, ends at the head
};

// Least-cost route from every vertex to the head: single-destination dynamic
// programming over a dense graph, O(n^2).
RouteTable all_pairs_routes(const ClusterGraph& graph);

struct Branch {
  std::vector<int> nodes;  // node ids, last is the head
  double cost = 0.0;
  int node_count() const noexcept { return static_cast<int>(nodes.size()); }
};

// One least-cost branch per member. Throws AssumptionViolation when a member
// cannot reach the head.
std::vector<Branch> build_branches(const ClusterGraph& graph);

// Most nodes first, then lowest cost, then lowest first node id.
const Branch& select_branch(const std::vector<Branch>& branches);

struct Margin {
  double low = 0.0;
  double high = 1.0;
};

enum class MonitorMode { Reactive, Proactive };

const char* to_string(MonitorMode mode) noexcept;

// Readings outside [low, high] are forwarded immediately; boundary readings
// stay proactive.
MonitorMode monitoring_dispatch(double reading, const Margin& margin);

}  // namespace optleach
