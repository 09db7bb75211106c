#pragma once

// Shared generators and independent reference implementations for the
// unit, property and acceptance suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "optleach/aco.hpp"
#include "optleach/core.hpp"
#include "optleach/intra_cluster.hpp"
#include "optleach/io.hpp"
#include "optleach/monitor.hpp"
#include "optleach/simulation.hpp"

namespace testing {

using namespace optleach;

inline constexpr int kCases = 10000;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Runs `body` on `cases` independent random streams derived from `seed`.
template <class F>
void for_all(std::uint64_t seed, F&& body, int cases = kCases) {
  const Rng base(seed);
  for (int c = 0; c < cases; ++c) {
    Rng rng = base.split(static_cast<std::uint64_t>(c));
    body(rng, c);
  }
}

// First-order radio model written out longhand.
inline double radio_tx(double bits, double d) { return bits * (50e-9 + 100e-12 * (d * d)); }
inline double radio_rx(double bits) { return bits * 50e-9; }

// --- cluster-head graphs -------------------------------------------------

// Random connected CH graph with `n` vertices, the last one the sink.
inline ChGraph random_ch_graph(int n, Rng& rng, double edge_prob = 0.5) {
  ChGraph g;
  for (int v = 0; v < n; ++v) {
    g.ids.push_back(v);
    g.positions.push_back({rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0)});
    g.energy.push_back(v + 1 == n ? 0.0 : rng.uniform(0.1, 1.0));
  }
  g.adjacency.assign(n, {});
  // random spanning tree, then extra edges
  for (int v = 1; v < n; ++v) {
    g.add_edge(v, static_cast<int>(rng.index(static_cast<std::size_t>(v))));
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const auto& adj = g.adjacency[i];
      if (std::find(adj.begin(), adj.end(), j) == adj.end() && rng.uniform() < edge_prob) {
        g.add_edge(i, j);
      }
    }
  }
  return g;
}

// Cheapest simple path cost from every vertex to the sink, by enumerating
// every simple path.
inline std::vector<double> exhaustive_path_costs(const ChGraph& g, double bits) {
  const int n = g.size();
  const int sink = n - 1;
  std::vector<double> best(n, kInf);
  best[sink] = 0.0;
  std::vector<char> on_path(n, 0);
  std::function<void(int, int, double)> dfs = [&](int start, int u, double acc) {
    if (u == sink) {
      best[start] = std::min(best[start], acc);
      return;
    }
    on_path[u] = 1;
    for (int v : g.adjacency[u]) {
      if (!on_path[v]) {
        dfs(start, v, acc + radio_tx(bits, g.distance(u, v)));
      }
    }
    on_path[u] = 0;
  };
  for (int s = 0; s < sink; ++s) dfs(s, s, 0.0);
  return best;
}

inline double exhaustive_tree_cost(const ChGraph& g, double bits) {
  const auto best = exhaustive_path_costs(g, bits);
  double total = 0.0;
  for (int v = 0; v + 1 < g.size(); ++v) total += best[v];
  return total;
}

// --- cluster routing -----------------------------------------------------

// Classic all-pairs Floyd-Warshall over directed costs.
inline std::vector<std::vector<double>> floyd_warshall(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  auto d = cost;
  for (std::size_t i = 0; i < n; ++i) d[i][i] = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (d[i][k] + d[k][j] < d[i][j]) d[i][j] = d[i][k] + d[k][j];
      }
    }
  }
  return d;
}

// Random connected undirected cluster with direction-dependent costs.
// With `integral` set every cost is a small integer, so path sums are exact
// in any order.
inline std::vector<std::vector<double>> random_cluster_costs(int n, Rng& rng, bool integral,
                                                             double edge_prob = 0.4) {
  std::vector<std::vector<double>> c(n, std::vector<double>(n, kInf));
  auto draw = [&] {
    return integral ? static_cast<double>(1 + rng.index(20)) : rng.uniform(0.0, 1.0);
  };
  auto link = [&](int u, int v) {
    c[u][v] = draw();
    c[v][u] = draw();
  };
  for (int v = 1; v < n; ++v) link(v, static_cast<int>(rng.index(static_cast<std::size_t>(v))));
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      if (!std::isfinite(c[u][v]) && rng.uniform() < edge_prob) link(u, v);
    }
  }
  return c;
}

// Cheapest simple path from every vertex to `head`, by enumeration.
inline std::vector<double> exhaustive_routes(const std::vector<std::vector<double>>& cost, int head) {
  const int n = static_cast<int>(cost.size());
  std::vector<double> best(n, kInf);
  best[head] = 0.0;
  std::vector<char> on_path(n, 0);
  std::function<void(int, int, double)> dfs = [&](int start, int u, double acc) {
    if (u == head) {
      best[start] = std::min(best[start], acc);
      return;
    }
    on_path[u] = 1;
    for (int v = 0; v < n; ++v) {
      if (!on_path[v] && std::isfinite(cost[u][v])) dfs(start, v, acc + cost[u][v]);
    }
    on_path[u] = 0;
  };
  for (int s = 0; s < n; ++s) {
    if (s != head) dfs(s, s, 0.0);
  }
  return best;
}

// --- clustering ----------------------------------------------------------

// Lloyd's k-means with farthest-point seeding; returns labels per row.
inline std::vector<int> kmeans(const std::vector<Vec>& pts, int k, int iters = 100) {
  std::vector<Vec> centers{pts.front()};
  while (static_cast<int>(centers.size()) < k) {
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double d = kInf;
      for (const auto& c : centers) d = std::min(d, (pts[i] - c).squaredNorm());
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    centers.push_back(pts[far]);
  }
  std::vector<int> label(pts.size(), 0);
  for (int it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      int best = 0;
      for (int c = 1; c < k; ++c) {
        if ((pts[i] - centers[c]).squaredNorm() < (pts[i] - centers[best]).squaredNorm()) best = c;
      }
      label[i] = best;
    }
    for (int c = 0; c < k; ++c) {
      Vec sum = Vec::Zero(pts.front().size());
      int cnt = 0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (label[i] == c) {
          sum += pts[i];
          ++cnt;
        }
      }
      if (cnt > 0) centers[c] = sum / cnt;
    }
  }
  return label;
}

// --- RBMs ----------------------------------------------------------------

inline RbmLayerParams random_rbm(int d, int f, Rng& rng, double w_scale = 0.5) {
  RbmLayerParams p;
  p.W = Mat(d, f);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < f; ++j) p.W(i, j) = rng.normal(0.0, w_scale);
  }
  p.a = Vec(f);
  for (int j = 0; j < f; ++j) p.a[j] = rng.normal(0.0, 0.5);
  p.b = Vec(d);
  p.sigma2 = Vec(d);
  for (int i = 0; i < d; ++i) {
    p.b[i] = rng.normal(0.0, 0.5);
    p.sigma2[i] = rng.uniform(0.5, 1.5);
  }
  p.visible = VisibleKind::Gaussian;
  return p;
}

// P(h_j = 1) for a Gaussian RBM with at most two visibles, integrating
// exp(-E(v, h)) over v on a grid instead of in closed form.
inline Vec quadrature_hidden_marginals(const RbmLayerParams& p, double half_width = 12.0,
                                       int steps = 1200) {
  const int d = p.visible_size();
  const int f = p.hidden_size();
  const double dv = 2.0 * half_width / steps;
  std::vector<double> weight(std::size_t{1} << f, 0.0);
  std::vector<double> log_terms;
  for (unsigned m = 0; m < weight.size(); ++m) {
    Vec h(f);
    for (int j = 0; j < f; ++j) h[j] = (m >> j) & 1u;
    const Vec centre = p.b + p.sigma2.cwiseSqrt().cwiseProduct(p.W * h);
    double sum = 0.0;
    Vec v(d);
    if (d == 1) {
      for (int a = 0; a < steps; ++a) {
        v[0] = centre[0] - half_width + (a + 0.5) * dv;
        sum += std::exp(-rbm_energy(v, h, p)) * dv;
      }
    } else {
      for (int a = 0; a < steps; ++a) {
        v[0] = centre[0] - half_width + (a + 0.5) * dv;
        for (int b = 0; b < steps; ++b) {
          v[1] = centre[1] - half_width + (b + 0.5) * dv;
          sum += std::exp(-rbm_energy(v, h, p)) * dv * dv;
        }
      }
    }
    weight[m] = sum;
  }
  double z = 0.0;
  for (double w : weight) z += w;
  Vec out = Vec::Zero(f);
  for (unsigned m = 0; m < weight.size(); ++m) {
    for (int j = 0; j < f; ++j) {
      if ((m >> j) & 1u) out[j] += weight[m] / z;
    }
  }
  return out;
}

// Two unit Gaussian blobs in `dim` dimensions, `n` rows each, labels 0 and
// 1, with centres `separation` apart along the diagonal.
inline EventBenchmark two_blobs(int n, int dim, double separation, Rng& rng) {
  EventBenchmark b;
  b.readings = Mat(2 * n, dim);
  const double shift = separation / std::sqrt(static_cast<double>(dim));
  for (int r = 0; r < 2 * n; ++r) {
    const int label = r % 2;
    for (int c = 0; c < dim; ++c) {
      b.readings(r, c) = rng.normal(label * shift, 1.0);
    }
    b.labels.push_back(label);
  }
  return b;
}

// --- simulations ---------------------------------------------------------

inline ScenarioConfig small_scenario(Protocol protocol, std::uint64_t seed, int nodes, int heads) {
  ScenarioConfig cfg;
  cfg.node_count = nodes;
  cfg.ch_count = heads;
  const double side = std::max(20.0, 14.0 * std::sqrt(static_cast<double>(nodes)));
  cfg.field_dims = {side, side};
  cfg.sink = {side / 2.0, side + 30.0};
  cfg.seed = seed;
  cfg.protocol = protocol;
  cfg.aco.n_iter = 10;
  cfg.aco.n_ants = 4;
  return cfg;
}

inline std::string metrics_csv(const std::vector<RoundMetrics>& series) {
  std::ostringstream out;
  write_metrics_csv(out, series);
  return out.str();
}

// --- golden files --------------------------------------------------------

inline std::string golden_path(const std::string& name) {
  return std::string(OPTLEACH_GOLDEN_DIR) + "/" + name;
}

inline bool updating_golden() {
  const char* flag = std::getenv("OPTLEACH_UPDATE_GOLDEN");
  return flag && std::string(flag) == "1";
}

// Compares `text` with the stored golden file, or rewrites it when
// OPTLEACH_UPDATE_GOLDEN=1.
inline bool matches_golden(const std::string& name, const std::string& text) {
  const std::string path = golden_path(name);
  if (updating_golden()) {
    std::ofstream(path, std::ios::binary) << text;
    return true;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream stored;
  stored << in.rdbuf();
  return stored.str() == text;
}

inline std::string number_lines(const std::vector<double>& xs) {
  std::string out;
  char buf[64];
  for (double x : xs) {
    std::snprintf(buf, sizeof buf, "%.17g\n", x);
    out += buf;
  }
  return out;
}

}  // namespace testing
