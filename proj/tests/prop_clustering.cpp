#include <numbers>
#include <numeric>

#include "doctest.h"
#include "optleach/clustering.hpp"
#include "support.hpp"

using namespace optleach;
using testing::for_all;

namespace {

Network random_network(Rng& rng, int n) {
  Network net;
  for (int i = 0; i < n; ++i) {
    NodeState node;
    node.id = i;
    node.position = {rng.uniform(0, 100), rng.uniform(0, 100)};
    node.e_0 = 1.0;
    node.e_res = rng.uniform(0.0, 1.0);
    node.alive = rng.uniform() < 0.85;
    net.nodes.push_back(node);
  }
  net.sink = {n, {50, 150}, 0, 0, true, Role::Sink};
  return net;
}

std::vector<int> alive_ids(const Network& net) {
  std::vector<int> out;
  for (const auto& n : net.nodes) {
    if (n.alive) out.push_back(n.id);
  }
  return out;
}

ClusterLayout random_layout(const Network& net, Rng& rng) {
  auto alive = alive_ids(net);
  std::shuffle(alive.begin(), alive.end(), rng.engine());
  const std::size_t k = 1 + rng.index(alive.size());
  ClusterLayout l;
  l.heads.assign(alive.begin(), alive.begin() + static_cast<std::ptrdiff_t>(k));
  for (std::size_t c = 0; c < k; ++c) l.radius.push_back(rng.uniform() < 0.1 ? 0.0 : rng.uniform());
  return l;
}

}  // namespace

TEST_CASE("property: partitions cover every alive node exactly once") {
  for_all(201, [&](Rng& rng, int) {
    Network net = random_network(rng, 2 + static_cast<int>(rng.index(60)));
    if (alive_ids(net).empty()) net.nodes[0].alive = true;
    ClusterLayout l = random_layout(net, rng);
    repartition(l, net, rng.uniform() < 0.5 ? 0.0 : 0.5);
    std::vector<int> counts(l.heads.size(), 0);
    int assigned = 0;
    for (const auto& n : net.nodes) {
      const int c = l.assignment[n.id];
      if (!n.alive) {
        CHECK(c == -1);
        continue;
      }
      REQUIRE(c >= 0);
      REQUIRE(c < l.cluster_count());
      ++counts[c];
      ++assigned;
    }
    CHECK(std::accumulate(counts.begin(), counts.end(), 0) == net.alive_count());
    CHECK(assigned == net.alive_count());
    for (int c = 0; c < l.cluster_count(); ++c) CHECK(l.assignment[l.heads[c]] == c);
  });
}

TEST_CASE("property: cluster radii stay in [1 - alpha, 1]") {
  for_all(202, [&](Rng& rng, int) {
    const double lo = rng.uniform(0.0, 100.0);
    const double hi = lo + rng.uniform(1e-6, 200.0);
    const double d = rng.uniform(lo, hi);
    const double alpha = rng.uniform();
    const double r = cluster_radius(d, hi, lo, alpha);
    CHECK(r >= 1.0 - alpha - 1e-15);
    CHECK(r <= 1.0);
  });
}

TEST_CASE("property: radii of converged layouts stay in range") {
  for_all(203, [&](Rng& rng, int) {
    Network net = random_network(rng, 3 + static_cast<int>(rng.index(30)));
    for (auto& n : net.nodes) n.alive = true;
    std::vector<double> est(net.nodes.size());
    for (const auto& n : net.nodes) est[n.id] = euclidean_distance(n.position, net.sink.position);
    ClusterLayout l = random_layout(net, rng);
    VoronoiParams p;
    p.alpha = rng.uniform();
    p.max_iter = 1 + static_cast<int>(rng.index(10));
    const AlphaConvergence res = converge_alpha(net, l, est, p);
    CHECK(res.alpha >= 0.0);
    CHECK(res.alpha <= 1.0);
    for (double r : res.layout.radius) {
      CHECK(r >= 1.0 - res.alpha - 1e-12);
      CHECK(r <= 1.0);
    }
  });
}

// A node that gets strictly closer to its own head while no other head gets
// closer keeps its cell. Layouts without such a move are redrawn.
TEST_CASE("property: approaching the assigned head keeps the assignment") {
  for_all(204, [&](Rng& rng, int) {
    for (;;) {
      std::vector<VoronoiSite> sites;
      const int k = 1 + static_cast<int>(rng.index(8));
      for (int s = 0; s < k; ++s) {
        sites.push_back({100 + s, {rng.uniform(0, 100), rng.uniform(0, 100)}, rng.uniform(0.05, 1.0)});
      }
      const PlacedNode node{0, {rng.uniform(0, 100), rng.uniform(0, 100)}};
      const int own = voronoi_partition(sites, {node})[0];
      const double reach = euclidean_distance(node.position, sites[own].position);
      for (int attempt = 0; attempt < 50; ++attempt) {
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double step = rng.uniform(0.0, reach);
        const Vec2 moved{node.position.x + step * std::cos(angle),
                         node.position.y + step * std::sin(angle)};
        bool admissible = euclidean_distance(moved, sites[own].position) < reach;
        for (int s = 0; s < k && admissible; ++s) {
          admissible = s == own || euclidean_distance(moved, sites[s].position) >=
                                       euclidean_distance(node.position, sites[s].position);
        }
        if (admissible) {
          CHECK(voronoi_partition(sites, {{0, moved}})[0] == own);
          return;
        }
      }
    }
  });
}

TEST_CASE("property: election is scale invariant and deterministic") {
  for_all(205, [&](Rng& rng, int) {
    Network net = random_network(rng, 2 + static_cast<int>(rng.index(40)));
    if (alive_ids(net).empty()) net.nodes[0].alive = true;
    if (rng.uniform() < 0.3) {
      for (auto& n : net.nodes) n.e_res = std::round(n.e_res * 4.0) / 4.0;  // force ties
    }
    ClusterLayout l = random_layout(net, rng);
    repartition(l, net, 0.0);
    const ChElectionParams base{rng.uniform(0.01, 1.0), static_cast<int>(rng.index(50)), 0.5};

    ClusterLayout a = l;
    ChElectionParams pa = base;
    const auto heads = select_cluster_heads(a, net, pa);

    ClusterLayout b = l;
    ChElectionParams pb = base;
    CHECK(select_cluster_heads(b, net, pb) == heads);

    const double scale = std::ldexp(1.0, static_cast<int>(rng.index(20)) - 10);
    Network scaled = net;
    for (auto& n : scaled.nodes) {
      n.e_res *= scale;
      n.e_0 *= scale;
    }
    ClusterLayout c = l;
    ChElectionParams pc = base;
    CHECK(select_cluster_heads(c, scaled, pc) == heads);
  });
}
