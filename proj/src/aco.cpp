#include "optleach/aco.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>

namespace optleach {

void AcoParams::validate() const {
  if (alpha_exp < 0.0 || beta_exp < 0.0 || (alpha_exp == 0.0 && beta_exp == 0.0)) {
    throw DomainError("aco: exponents must be non-negative and not both zero");
  }
  if (!(gamma_norm > 0.0 && gamma_norm <= 1.0)) {
    throw DomainError("aco: gamma must lie in (0, 1]");
  }
  if (n_ants < 1 || n_iter < 1) {
    throw DomainError("aco: n_ants and n_iter must be positive");
  }
  if (!(tau_min > 0.0) || tau_init < tau_min) {
    throw DomainError("aco: require 0 < tau_min <= tau_init");
  }
}

void ChGraph::add_edge(int i, int j) {
  if (i == j) {
    return;
  }
  if (adjacency.size() < ids.size()) {
    adjacency.resize(ids.size());
  }
  if (std::find(adjacency[i].begin(), adjacency[i].end(), j) == adjacency[i].end()) {
    adjacency[i].push_back(j);
    adjacency[j].push_back(i);
  }
}

bool ChGraph::reaches_sink() const {
  std::vector<char> seen(size(), 0);
  std::queue<int> frontier;
  frontier.push(sink());
  seen[sink()] = 1;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int v : adjacency[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        frontier.push(v);
      }
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
}

PheromoneMatrix::PheromoneMatrix(int n, double initial)
    : n_(n), tau_(static_cast<std::size_t>(n) * n, initial) {}

void PheromoneMatrix::set(int i, int j, double value) {
  tau_[static_cast<std::size_t>(i) * n_ + j] = value;
  tau_[static_cast<std::size_t>(j) * n_ + i] = value;
}

namespace {

// std::pow with the common integer exponents short-circuited.
double power(double base, double exponent) {
  if (exponent == 1.0) return base;
  if (exponent == 2.0) return base * base;
  if (exponent == 0.0) return 1.0;
  return std::pow(base, exponent);
}

}  // namespace

double heuristic(double e_i, double d_ij, double d_js, double d_is, double lambda) {
  if (!(d_ij > 0.0) || !(d_is > 0.0)) {
    throw DomainError("heuristic: coincident vertices");
  }
  const double delta = e_i / d_ij;
  return delta * (1.0 + power(d_js / d_is, lambda));
}

std::vector<double> transition_probabilities(std::span<const double> tau,
                                             std::span<const double> eta, double alpha_exp,
                                             double beta_exp, bool* fell_back) {
  if (tau.empty() || tau.size() != eta.size()) {
    throw DomainError("transition_probabilities: empty or mismatched candidate set");
  }
  std::vector<double> w(tau.size());
  double total = 0.0;
  for (std::size_t k = 0; k < tau.size(); ++k) {
    w[k] = power(tau[k], alpha_exp) * power(eta[k], beta_exp);
    total += w[k];
  }
  const bool uniform = !(total > 0.0) || !std::isfinite(total);
  if (fell_back) {
    *fell_back = uniform;
  }
  if (uniform) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
    return w;
  }
  for (double& x : w) {
    x /= total;
  }
  return w;
}

void update_pheromone(PheromoneMatrix& tau, std::span<const Tour> tours, const ChGraph& graph,
                      int n_res, double tau_min) {
  if (n_res < 1) {
    throw DomainError("update_pheromone: n_res must be >= 1");
  }
  const double p = 1.0 / static_cast<double>(n_res);
  const int n = tau.size();
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      tau.set(i, j, std::max(tau_min, (1.0 - p) * tau.at(i, j)));
    }
  }
  for (const Tour& tour : tours) {
    for (std::size_t k = 0; k + 1 < tour.size(); ++k) {
      const int i = tour[k];
      const int j = tour[k + 1];
      const double d = graph.distance(i, j);
      if (!(d > 0.0)) {
        continue;
      }
      const double e_i = i == graph.sink() ? 0.0 : graph.energy[i];
      const double e_j = j == graph.sink() ? 0.0 : graph.energy[j];
      const double delta = (e_i + e_j) / (d * d);
      tau.set(i, j, std::max(tau_min, tau.at(i, j) + p * delta));
    }
  }
}

double RoutingTree::total_cost() const {
  double sum = 0.0;
  for (double c : path_cost) {
    if (std::isfinite(c)) {
      sum += c;
    }
  }
  return sum;
}

double tour_cost(const Tour& tour, const ChGraph& graph, const EnergyModel& model) {
  double cost = 0.0;
  for (std::size_t k = 0; k + 1 < tour.size(); ++k) {
    cost += tx_energy(model, model.packet_bits, graph.distance(tour[k], tour[k + 1]));
  }
  return cost;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Removes cycles from a walk, keeping the last visit of every vertex.
Tour erase_loops(const Tour& walk) {
  Tour out;
  for (int v : walk) {
    auto it = std::find(out.begin(), out.end(), v);
    if (it != out.end()) {
      out.erase(it + 1, out.end());
    } else {
      out.push_back(v);
    }
  }
  return out;
}

// Per-run constants: distances, heuristic values and hop costs.
struct AcoTables {
  int n = 0;
  std::vector<double> dist;
  std::vector<double> eta;
  std::vector<double> hop_cost;

  double d(int i, int j) const { return dist[static_cast<std::size_t>(i) * n + j]; }
  double h(int i, int j) const { return eta[static_cast<std::size_t>(i) * n + j]; }
  double c(int i, int j) const { return hop_cost[static_cast<std::size_t>(i) * n + j]; }
};

AcoTables make_tables(const ChGraph& graph, const EnergyModel& model, double lambda) {
  AcoTables t;
  t.n = graph.size();
  const std::size_t nn = static_cast<std::size_t>(t.n) * t.n;
  t.dist.assign(nn, 0.0);
  t.eta.assign(nn, 0.0);
  t.hop_cost.assign(nn, 0.0);
  const int sink = graph.sink();
  for (int i = 0; i < t.n; ++i) {
    for (int j = 0; j < t.n; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * t.n + j;
      t.dist[k] = graph.distance(i, j);
      t.hop_cost[k] = tx_energy(model, model.packet_bits, t.dist[k]);
    }
  }
  for (int i = 0; i < t.n; ++i) {
    const double d_is = t.d(i, sink);
    for (int j = 0; j < t.n; ++j) {
      const double d_ij = t.d(i, j);
      if (i != j && d_ij > 0.0 && d_is > 0.0) {
        t.eta[static_cast<std::size_t>(i) * t.n + j] =
            heuristic(graph.energy[i], d_ij, t.d(j, sink), d_is, lambda);
      }
    }
  }
  return t;
}

double walk_cost(const Tour& tour, const AcoTables& t) {
  double cost = 0.0;
  for (std::size_t k = 0; k + 1 < tour.size(); ++k) {
    cost += t.c(tour[k], tour[k + 1]);
  }
  return cost;
}

std::optional<Tour> construct_tour(int start, const ChGraph& graph, const AcoTables& tables,
                                   const PheromoneMatrix& tau, const AcoParams& params,
                                   bool allow_revisits, Rng& rng, int& fallbacks) {
  const int n = graph.size();
  const int sink = graph.sink();
  std::vector<char> visited(n, 0);
  Tour walk{start};
  visited[start] = 1;
  int current = start;
  const int max_steps = 4 * n;
  std::vector<int> cand;
  std::vector<double> tau_c;
  std::vector<double> eta_c;
  for (int step = 0; step < max_steps; ++step) {
    cand.clear();
    tau_c.clear();
    eta_c.clear();
    const double d_is = tables.d(current, sink);
    for (int j : graph.adjacency[current]) {
      if (visited[j] && !allow_revisits) {
        continue;
      }
      if (!(tables.d(current, j) > 0.0) || !(d_is > 0.0)) {
        continue;  // coincident vertices are not candidates
      }
      cand.push_back(j);
      tau_c.push_back(tau.at(current, j));
      eta_c.push_back(tables.h(current, j));
    }
    if (cand.empty()) {
      return std::nullopt;
    }
    bool fell_back = false;
    const auto prob =
        transition_probabilities(tau_c, eta_c, params.alpha_exp, params.beta_exp, &fell_back);
    if (fell_back) {
      ++fallbacks;
    }
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t pick = prob.size() - 1;
    for (std::size_t k = 0; k < prob.size(); ++k) {
      acc += prob[k];
      if (u < acc) {
        pick = k;
        break;
      }
    }
    current = cand[pick];
    walk.push_back(current);
    visited[current] = 1;
    if (current == sink) {
      return allow_revisits ? erase_loops(walk) : walk;
    }
  }
  return std::nullopt;
}

}  // namespace

AcoResult run_aco(const ChGraph& graph, const EnergyModel& model, const AcoParams& params,
                  const Rng& rng) {
  params.validate();
  const int n = graph.size();
  if (n < 1 || graph.adjacency.size() != static_cast<std::size_t>(n) ||
      graph.energy.size() != static_cast<std::size_t>(n) ||
      graph.positions.size() != static_cast<std::size_t>(n)) {
    throw DomainError("run_aco: inconsistent graph");
  }
  if (!graph.reaches_sink()) {
    throw AssumptionViolation("run_aco: cluster-head graph is not connected to the sink");
  }
  const int sink = graph.sink();
  const AcoTables tables = make_tables(graph, model, params.lambda_norm);
  AcoResult result;
  PheromoneMatrix tau(n, params.tau_init);
  std::vector<Tour> best(n);
  std::vector<double> best_cost(n, kInf);
  best_cost[sink] = 0.0;

  // Suffixes of a tour are tours for the visited heads as well.
  auto absorb = [&](const Tour& tour) {
    for (std::size_t k = 0; k + 1 < tour.size(); ++k) {
      Tour suffix(tour.begin() + static_cast<std::ptrdiff_t>(k), tour.end());
      const double c = walk_cost(suffix, tables);
      const int v = tour[k];
      if (c < best_cost[v]) {
        best_cost[v] = c;
        best[v] = std::move(suffix);
      }
    }
  };

  int fallbacks = 0;
  for (int iter = 0; iter < params.n_iter; ++iter) {
    std::vector<Tour> iteration_best;
    for (int attempt = 0; attempt < 2 && iteration_best.empty(); ++attempt) {
      const bool relaxed = attempt == 1;
      if (relaxed) {
        ++result.relaxed_iterations;
        result.log.push_back("iteration " + std::to_string(iter) +
                             ": every ant stuck, allowing revisits");
      }
      for (int start = 0; start < sink; ++start) {
        std::optional<Tour> chosen;
        double chosen_cost = kInf;
        // Ants of one start share a stream; starts are independent of each other.
        Rng ant_rng = rng.split((static_cast<std::uint64_t>(iter) * 2 + attempt) * n + start);
        for (int ant = 0; ant < params.n_ants; ++ant) {
          auto tour = construct_tour(start, graph, tables, tau, params, relaxed, ant_rng, fallbacks);
          if (!tour) {
            continue;
          }
          const double c = walk_cost(*tour, tables);
          if (c < chosen_cost) {
            chosen_cost = c;
            chosen = std::move(tour);
          }
        }
        if (chosen) {
          iteration_best.push_back(std::move(*chosen));
        }
      }
      if (sink == 0) {
        break;
      }
    }
    for (const Tour& t : iteration_best) {
      absorb(t);
    }
    const int n_res = static_cast<int>(
        std::count_if(best_cost.begin(), best_cost.begin() + sink, [](double c) { return c < kInf; }));
    if (!iteration_best.empty()) {
      update_pheromone(tau, iteration_best, graph, std::max(1, n_res), params.tau_min);
    }
    double trace = 0.0;
    for (int v = 0; v < sink; ++v) {
      trace += best_cost[v];
    }
    result.cost_trace.push_back(trace);
  }
  if (fallbacks > 0) {
    result.log.push_back("uniform fallback used in " + std::to_string(fallbacks) + " steps");
  }

  // Cheapest heads first: each path is followed until it meets a vertex that
  // already has a successor, so the result is a tree rooted at the sink.
  RoutingTree& tree = result.tree;
  tree.next_hop.assign(n, -1);
  tree.path_cost.assign(n, kInf);
  tree.path_cost[sink] = 0.0;
  std::vector<int> order;
  for (int v = 0; v < sink; ++v) {
    if (best_cost[v] < kInf) {
      order.push_back(v);
    }
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return best_cost[a] < best_cost[b]; });
  std::vector<char> placed(n, 0);
  placed[sink] = 1;
  for (int v : order) {
    const Tour& path = best[v];
    for (std::size_t k = 0; k + 1 < path.size() && !placed[path[k]]; ++k) {
      tree.next_hop[path[k]] = path[k + 1];
      placed[path[k]] = 1;
    }
  }
  for (int v = 0; v < sink; ++v) {
    if (!placed[v]) {
      continue;
    }
    double cost = 0.0;
    for (int u = v; u != sink; u = tree.next_hop[u]) {
      cost += tables.c(u, tree.next_hop[u]);
    }
    tree.path_cost[v] = cost;
  }

  // Heads no ant delivered from hang off their cheapest placed neighbour.
  int attached = 0;
  for (bool grew = true; grew;) {
    grew = false;
    for (int v = 0; v < sink; ++v) {
      if (placed[v]) {
        continue;
      }
      int via = -1;
      double via_cost = kInf;
      for (int u : graph.adjacency[v]) {
        if (placed[u] && tables.d(v, u) > 0.0 && tables.c(v, u) + tree.path_cost[u] < via_cost) {
          via = u;
          via_cost = tables.c(v, u) + tree.path_cost[u];
        }
      }
      if (via >= 0) {
        tree.next_hop[v] = via;
        tree.path_cost[v] = via_cost;
        placed[v] = 1;
        grew = true;
        ++attached;
      }
    }
  }
  if (attached > 0) {
    result.log.push_back(std::to_string(attached) + " heads without an ant route attached to a neighbour");
  }
  return result;
}

}  // namespace optleach
