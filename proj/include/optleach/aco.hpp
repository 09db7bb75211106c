#pragma once

// Inter-cluster routing: ants search CH -> sink paths over the cluster-head
// graph, guided by pheromone and an energy/progress heuristic. Runs at the
// sink, once per election campaign.

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "optleach/core.hpp"

namespace optleach {

struct AcoParams {
  double alpha_exp = 1.0;   // pheromone exponent
  double beta_exp = 2.0;    // heuristic exponent
  double gamma_norm = 1.0;  // realised as the per-step normaliser
  double lambda_norm = 1.0;
  int n_ants = 10;
  int n_iter = 100;
  double tau_init = 1.0;
  double tau_min = 1e-6;

  void validate() const;
};

// Vertices are cluster heads plus the sink; the sink is always the last vertex.
struct ChGraph {
  std::vector<int> ids;  // node id per vertex
  std::vector<Vec2> positions;
  std::vector<double> energy;  // residual energy per vertex (sink entry ignored)
  std::vector<std::vector<int>> adjacency;

  int size() const noexcept { return static_cast<int>(ids.size()); }
  int sink() const noexcept { return size() - 1; }
  double distance(int i, int j) const { return euclidean_distance(positions[i], positions[j]); }
  void add_edge(int i, int j);
  bool reaches_sink() const;
};

class PheromoneMatrix {
 public:
  PheromoneMatrix() = default;
  PheromoneMatrix(int n, double initial);

  int size() const noexcept { return n_; }
  double at(int i, int j) const { return tau_[static_cast<std::size_t>(i) * n_ + j]; }
  void set(int i, int j, double value);

 private:
  int n_ = 0;
  std::vector<double> tau_;
};

// eta_ij = (E_i / d(i,j)) * (1 + (d(j,s) / d(i,s))^lambda)
double heuristic(double e_i, double d_ij, double d_js, double d_is, double lambda);

// P_ij proportional to tau^alpha * eta^beta over the candidate set. Falls back
// to uniform when every weight is zero and reports it through `fell_back`.
std::vector<double> transition_probabilities(std::span<const double> tau,
                                             std::span<const double> eta, double alpha_exp,
                                             double beta_exp, bool* fell_back = nullptr);

using Tour = std::vector<int>;  // vertex sequence ending at the sink

// Evaporates every edge by (1 - 1/n_res), then deposits (1/n_res) * delta on
// each edge of each tour with delta = (E_i + E_j) / d(i,j)^2. The sink
// contributes no energy to delta. Entries never drop below tau_min.
void update_pheromone(PheromoneMatrix& tau, std::span<const Tour> tours, const ChGraph& graph,
                      int n_res, double tau_min);

struct RoutingTree {
  std::vector<int> next_hop;      // per vertex; -1 for the sink and unresolved heads
  std::vector<double> path_cost;  // accumulated tx energy along the tree

  double total_cost() const;
};

struct AcoResult {
  RoutingTree tree;
  std::vector<double> cost_trace;  // per iteration, sum of best-known costs
  int relaxed_iterations = 0;
  std::vector<std::string> log;
};

// Energy cost of a vertex sequence: sum of tx_energy(packet, hop distance).
double tour_cost(const Tour& tour, const ChGraph& graph, const EnergyModel& model);

AcoResult run_aco(const ChGraph& graph, const EnergyModel& model, const AcoParams& params,
                  const Rng& rng);

}  // namespace optleach
