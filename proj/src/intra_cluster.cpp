#include "optleach/intra_cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace optleach {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

bool unit(double x) { return x >= 0.0 && x <= 1.0; }
}  // namespace

void LinkCostParams::validate() const {
  if (!unit(mu)) {
    throw DomainError("link cost mu must lie in [0, 1]");
  }
}

double link_cost(int n_c, double d_c, double l_qi, double e_res_norm, double mu) {
  if (n_c <= 0) {
    throw AssumptionViolation("link_cost: isolated node (no connections)");
  }
  if (!unit(d_c) || !unit(l_qi) || !unit(e_res_norm) || !unit(mu)) {
    throw DomainError("link_cost: inputs must be normalised to [0, 1]");
  }
  const double p = 1.0 / static_cast<double>(n_c);
  return p * d_c + (1.0 - p) * (mu * l_qi + (1.0 - mu) * e_res_norm);
}

double LinkQualityModel::quality(double distance, Rng* rng) const {
  double q = range > 0.0 ? 1.0 - distance / range : 0.0;
  if (rng != nullptr && noise > 0.0) {
    q += rng->normal(0.0, noise);
  }
  return std::clamp(q, 0.0, 1.0);
}

bool ClusterGraph::has_edge(int u, int v) const { return std::isfinite(cost[u][v]); }

ClusterGraph build_cluster_graph(const Network& net, const std::vector<int>& members, int head_id,
                                 const ClusterGraphOptions& options, Rng* rng) {
  options.cost.validate();
  ClusterGraph g;
  g.vertices = members;
  auto it = std::find(g.vertices.begin(), g.vertices.end(), head_id);
  if (it == g.vertices.end()) {
    g.vertices.push_back(head_id);
    it = g.vertices.end() - 1;
  }
  g.head = static_cast<int>(it - g.vertices.begin());
  const int n = g.size();

  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  std::vector<std::vector<char>> linked(n, std::vector<char>(n, 0));
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      const double d =
          euclidean_distance(net.nodes[g.vertices[u]].position, net.nodes[g.vertices[v]].position);
      dist[u][v] = dist[v][u] = d;
      if (d <= options.comm_range) {
        linked[u][v] = linked[v][u] = 1;
      }
    }
  }
  if (options.bridge_to_head) {
    // Grow the head's component; join each stranded vertex by its shortest link into it.
    std::vector<char> seen(n, 0);
    auto flood = [&](int root) {
      std::queue<int> frontier;
      frontier.push(root);
      seen[root] = 1;
      while (!frontier.empty()) {
        const int u = frontier.front();
        frontier.pop();
        for (int v = 0; v < n; ++v) {
          if (linked[u][v] && !seen[v]) {
            seen[v] = 1;
            frontier.push(v);
          }
        }
      }
    };
    flood(g.head);
    while (true) {
      int bu = -1;
      int bv = -1;
      for (int u = 0; u < n; ++u) {
        if (!seen[u]) continue;
        for (int v = 0; v < n; ++v) {
          if (!seen[v] && (bu < 0 || dist[u][v] < dist[bu][bv])) {
            bu = u;
            bv = v;
          }
        }
      }
      if (bu < 0) break;
      linked[bu][bv] = linked[bv][bu] = 1;
      flood(bv);
    }
  }

  // RSSI of every link, min-max scaled over the cluster.
  double lo = kInf;
  double hi = -kInf;
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      if (linked[u][v]) {
        const double r = options.rssi.rssi(dist[u][v]);
        lo = std::min(lo, r);
        hi = std::max(hi, r);
      }
    }
  }
  auto scaled_rssi = [&](double d) {
    return hi > lo ? (options.rssi.rssi(d) - lo) / (hi - lo) : 1.0;
  };

  g.n_c.assign(n, 0);
  g.d_c.assign(n, 0.0);
  g.e_res_norm.assign(n, 0.0);
  std::vector<double> raw_dc(n, 0.0);
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      if (u != v && linked[u][v]) {
        ++g.n_c[u];
        raw_dc[u] += scaled_rssi(dist[u][v]);
      }
    }
    const auto& node = net.nodes[g.vertices[u]];
    g.e_res_norm[u] = node.e_0 > 0.0 ? std::clamp(node.e_res / node.e_0, 0.0, 1.0) : 0.0;
  }
  const auto [dc_lo, dc_hi] = std::minmax_element(raw_dc.begin(), raw_dc.end());
  for (int u = 0; u < n; ++u) {
    g.d_c[u] = *dc_hi > *dc_lo ? (raw_dc[u] - *dc_lo) / (*dc_hi - *dc_lo) : 0.0;
  }

  g.l_qi.assign(n, std::vector<double>(n, 0.0));
  g.cost.assign(n, std::vector<double>(n, kInf));
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      if (linked[u][v]) {
        g.l_qi[u][v] = g.l_qi[v][u] = options.quality.quality(dist[u][v], rng);
      }
    }
  }
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      if (u != v && linked[u][v]) {
        g.cost[u][v] = link_cost(g.n_c[u], g.d_c[u], g.l_qi[u][v], g.e_res_norm[u], options.cost.mu);
      }
    }
  }
  return g;
}

ClusterGraph make_cluster_graph(int n, int head,
                                const std::vector<std::vector<double>>& directed_costs) {
  if (n < 1 || head < 0 || head >= n || directed_costs.size() != static_cast<std::size_t>(n)) {
    throw DomainError("make_cluster_graph: bad dimensions");
  }
  ClusterGraph g;
  g.vertices.resize(n);
  for (int k = 0; k < n; ++k) {
    g.vertices[k] = k;
  }
  g.head = head;
  g.cost = directed_costs;
  g.n_c.assign(n, 0);
  g.d_c.assign(n, 0.0);
  g.e_res_norm.assign(n, 0.0);
  g.l_qi.assign(n, std::vector<double>(n, 0.0));
  for (int u = 0; u < n; ++u) {
    if (g.cost[u].size() != static_cast<std::size_t>(n)) {
      throw DomainError("make_cluster_graph: cost matrix must be square");
    }
    g.cost[u][u] = kInf;
    for (int v = 0; v < n; ++v) {
      if (u != v && std::isfinite(g.cost[u][v])) {
        ++g.n_c[u];
      }
    }
  }
  return g;
}

std::vector<int> RouteTable::path(int from) const {
  std::vector<int> out;
  if (!std::isfinite(cost[from])) {
    return out;
  }
  for (int u = from; u != -1; u = next[u]) {
    out.push_back(u);
  }
  return out;
}

RouteTable all_pairs_routes(const ClusterGraph& graph) {
  const int n = graph.size();
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      if (graph.cost[u][v] < 0.0) {
        throw DomainError("all_pairs_routes: negative edge cost");
      }
    }
  }
  RouteTable table;
  table.next.assign(n, -1);
  table.cost.assign(n, kInf);
  std::vector<char> done(n, 0);
  table.cost[graph.head] = 0.0;
  // Dense Dijkstra toward the head: n rounds, each an O(n) scan and relax.
  for (int round = 0; round < n; ++round) {
    int v = -1;
    for (int k = 0; k < n; ++k) {
      if (!done[k] && std::isfinite(table.cost[k]) && (v < 0 || table.cost[k] < table.cost[v])) {
        v = k;
      }
    }
    if (v < 0) {
      break;
    }
    done[v] = 1;
    for (int u = 0; u < n; ++u) {
      if (done[u] || !std::isfinite(graph.cost[u][v])) {
        continue;
      }
      const double via = graph.cost[u][v] + table.cost[v];
      if (via < table.cost[u]) {
        table.cost[u] = via;
        table.next[u] = v;
      }
    }
  }
  return table;
}

std::vector<Branch> build_branches(const ClusterGraph& graph) {
  const RouteTable routes = all_pairs_routes(graph);
  std::vector<Branch> out;
  for (int u = 0; u < graph.size(); ++u) {
    if (u == graph.head) {
      continue;
    }
    if (!std::isfinite(routes.cost[u])) {
      throw AssumptionViolation("build_branches: node " + std::to_string(graph.vertices[u]) +
                                " cannot reach its cluster head");
    }
    Branch b;
    for (int k : routes.path(u)) {
      b.nodes.push_back(graph.vertices[k]);
    }
    b.cost = routes.cost[u];
    out.push_back(std::move(b));
  }
  if (out.empty()) {
    out.push_back(Branch{{graph.vertices[graph.head]}, 0.0});
  }
  return out;
}

const Branch& select_branch(const std::vector<Branch>& branches) {
  if (branches.empty()) {
    throw DomainError("select_branch: empty branch set");
  }
  auto better = [](const Branch& a, const Branch& b) {
    if (a.node_count() != b.node_count()) {
      return a.node_count() > b.node_count();
    }
    if (a.cost != b.cost) {
      return a.cost < b.cost;
    }
    return a.nodes < b.nodes;
  };
  const Branch* best = &branches.front();
  for (const auto& b : branches) {
    if (better(b, *best)) {
      best = &b;
    }
  }
  return *best;
}

const char* to_string(MonitorMode mode) noexcept {
  return mode == MonitorMode::Reactive ? "reactive" : "proactive";
}

MonitorMode monitoring_dispatch(double reading, const Margin& margin) {
  if (!(margin.low <= margin.high)) {
    throw DomainError("monitoring_dispatch: margin low exceeds high");
  }
  return (reading < margin.low || reading > margin.high) ? MonitorMode::Reactive
                                                         : MonitorMode::Proactive;
}

}  // namespace optleach
